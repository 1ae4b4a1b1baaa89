use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{euclid, GpInput, KernelConfig, RbfForm, SideInfo};
use super::model::{factor_with_noise, lml_from_factor, validate_inputs, GpModel};
use super::{GpError, MIN_NOISE_VARIANCE};

/// Box constraints of the hyperparameter search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub lengthscale: (f64, f64),
    pub signal_variance: (f64, f64),
    /// Lower bound on `σ²`; the upper bound is `max(var(Y), min_noise)`.
    pub min_noise: f64,
}

impl Default for HyperBounds {
    fn default() -> Self {
        HyperBounds {
            lengthscale: (1e-3, 1e3),
            signal_variance: (1e-3, 1e3),
            min_noise: MIN_NOISE_VARIANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Total starts, the first being the heuristic one.
    pub starts: usize,
    /// Maximum number of log marginal likelihood evaluations.
    pub budget: usize,
    /// Half-width (natural log units) of the first refinement bracket.
    pub initial_step: f64,
    /// Golden-section evaluations per coordinate and sweep.
    pub line_evals: usize,
    /// Refinement stops once a full sweep gains less than this (nats).
    pub tolerance: f64,
    pub form: RbfForm,
    pub bounds: HyperBounds,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            starts: 4,
            budget: 200,
            initial_step: 2.0,
            line_evals: 6,
            tolerance: 1e-2,
            form: RbfForm::Unsquared,
            bounds: HyperBounds::default(),
        }
    }
}

/// What the optimizer did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub evaluations: usize,
    /// LML at each start; `-inf` marks a start that failed to factorize.
    pub start_lml: Vec<f64>,
    pub best_start: usize,
    /// Best LML after the screening phase and after every sweep.
    pub lml_trace: Vec<f64>,
    pub final_lml: f64,
}

/// Squared distances of all unordered pairs `a ≥ b`, in packed
/// lower-triangular order, per kernel block.
struct PairTerms {
    n: usize,
    spatial: Vec<f64>,
    temporal: Vec<f64>,
    /// Node-wise features first (u and v summed), then edge-wise numeric.
    side: Vec<Vec<f64>>,
    categorical: Vec<f64>,
}

impl PairTerms {
    fn new(inputs: &[GpInput], use_side: bool, form: RbfForm) -> Self {
        let n = inputs.len();
        let pairs = n * (n + 1) / 2;
        let groups = if use_side {
            inputs[0].side.as_deref().map_or(0, SideInfo::numeric_groups)
        } else {
            0
        };
        let mut terms = PairTerms {
            n,
            spatial: Vec::with_capacity(pairs),
            temporal: Vec::with_capacity(pairs),
            side: vec![Vec::with_capacity(pairs); groups],
            categorical: Vec::with_capacity(if use_side { pairs } else { 0 }),
        };
        for a in 0..n {
            for b in 0..=a {
                let (x, y) = (&inputs[a], &inputs[b]);
                terms.spatial.push(
                    form.transform(euclid(&x.from, &y.from)) + form.transform(euclid(&x.to, &y.to)),
                );
                terms.temporal.push(form.transform((x.time - y.time).abs()));
                if !use_side {
                    continue;
                }
                let (sx, sy) = (x.side.as_deref().unwrap(), y.side.as_deref().unwrap());
                let n_node = sx.node_from.len();
                for i in 0..n_node {
                    terms.side[i].push(
                        form.transform((sx.node_from[i] - sy.node_from[i]).abs())
                            + form.transform((sx.node_to[i] - sy.node_to[i]).abs()),
                    );
                }
                for (j, (p, q)) in sx.edge_numeric.iter().zip(&sy.edge_numeric).enumerate() {
                    terms.side[n_node + j].push(form.transform((p - q).abs()));
                }
                terms.categorical.push(
                    sx.edge_categorical
                        .iter()
                        .zip(&sy.edge_categorical)
                        .map(|(p, q)| p.iter().zip(q).map(|(s, t)| s * t).sum::<f64>())
                        .sum(),
                );
            }
        }
        terms
    }

    fn gram(&self, theta: &KernelConfig) -> Vec<f64> {
        let n = self.n;
        let inv_s = 1.0 / (theta.spatial_lengthscale * theta.spatial_lengthscale);
        let inv_t = 1.0 / (theta.temporal_lengthscale * theta.temporal_lengthscale);
        let inv_side: Vec<f64> = theta.side_lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut k = vec![0.0; n * n];
        let mut p = 0;
        for a in 0..n {
            for b in 0..=a {
                let mut v = theta.signal_variance
                    * (-self.spatial[p] * inv_s - self.temporal[p] * inv_t).exp();
                if !self.side.is_empty() || !self.categorical.is_empty() {
                    for (g, inv) in self.side.iter().zip(&inv_side) {
                        v += (-g[p] * inv).exp();
                    }
                    v += self.categorical[p];
                }
                k[a * n + b] = v;
                p += 1;
            }
        }
        k
    }

    /// `sqrt(median)` of the off-diagonal entries of a block, so the
    /// exponent equals one at the median pair. `1.0` if the median is zero.
    fn heuristic_lengthscale(&self, block: &[f64]) -> f64 {
        let mut off: Vec<f64> = Vec::with_capacity(block.len().saturating_sub(self.n));
        let mut p = 0;
        for a in 0..self.n {
            for b in 0..=a {
                if a != b {
                    off.push(block[p]);
                }
                p += 1;
            }
        }
        if off.is_empty() {
            return 1.0;
        }
        let mid = off.len() / 2;
        let (_, m, _) = off.select_nth_unstable_by(mid, |x, y| x.total_cmp(y));
        if *m > 0.0 {
            m.sqrt()
        } else {
            1.0
        }
    }
}

/// Log-space parameter vector `[l_s, l_t, side…, σ_f², σ²]`.
struct Space {
    lower: Vec<f64>,
    upper: Vec<f64>,
    use_side: bool,
    form: RbfForm,
}

impl Space {
    fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn theta(&self, x: &[f64]) -> KernelConfig {
        let d = x.len();
        KernelConfig {
            spatial_lengthscale: x[0].exp(),
            temporal_lengthscale: x[1].exp(),
            side_lengthscales: x[2..d - 2].iter().map(|v| v.exp()).collect(),
            signal_variance: x[d - 2].exp(),
            noise_variance: x[d - 1].exp(),
            use_side_info: self.use_side,
            form: self.form,
        }
    }
}

struct Objective<'a> {
    terms: &'a PairTerms,
    deviations: &'a [f64],
    space: &'a Space,
    evaluations: usize,
}

impl Objective<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let theta = self.space.theta(x);
        let k = self.terms.gram(&theta);
        match factor_with_noise(k, self.terms.n, theta.noise_variance) {
            Ok(chol) => {
                let (lml, _) = lml_from_factor(&chol, self.deviations);
                if lml.is_finite() {
                    lml
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Fits `GP(μ₀, k_Θ)` with `μ₀ = mean(Y)` and `Θ` maximizing the log
/// marginal likelihood.
///
/// The search screens `options.starts` starting points (a data-driven
/// heuristic plus seeded random perturbations of it), then refines the best
/// one coordinate by coordinate with golden-section line searches in
/// log-space, halving the bracket every sweep, until the evaluation budget
/// is spent.
pub fn fit(
    inputs: &[GpInput],
    targets: &[f64],
    use_side_info: bool,
    seed: u64,
    options: &FitOptions,
) -> Result<GpModel, GpError> {
    if inputs.len() < 2 {
        return Err(GpError::TooFewPoints(inputs.len()));
    }
    let groups = if use_side_info {
        inputs[0]
            .side
            .as_deref()
            .ok_or(GpError::MissingSideInfo(0))?
            .numeric_groups()
    } else {
        0
    };
    let probe = KernelConfig {
        side_lengthscales: vec![1.0; groups],
        use_side_info,
        form: options.form,
        ..KernelConfig::new(1.0, 1.0, 1.0, 1.0)
    };
    validate_inputs(inputs, Some(targets), &probe)?;

    let n = targets.len() as f64;
    let prior_mean = targets.iter().sum::<f64>() / n;
    let deviations: Vec<f64> = targets.iter().map(|y| y - prior_mean).collect();
    let variance = deviations.iter().map(|d| d * d).sum::<f64>() / n;
    let terms = PairTerms::new(inputs, use_side_info, options.form);

    let b = &options.bounds;
    let noise_hi = variance.max(b.min_noise);
    let mut lower = vec![b.lengthscale.0.ln(); 2 + groups];
    let mut upper = vec![b.lengthscale.1.ln(); 2 + groups];
    lower.extend([b.signal_variance.0.ln(), b.min_noise.ln()]);
    upper.extend([b.signal_variance.1.ln(), noise_hi.ln()]);
    let space = Space {
        lower,
        upper,
        use_side: use_side_info,
        form: options.form,
    };

    let mut heuristic = vec![
        terms.heuristic_lengthscale(&terms.spatial).ln(),
        terms.heuristic_lengthscale(&terms.temporal).ln(),
    ];
    heuristic.extend(terms.side.iter().map(|g| terms.heuristic_lengthscale(g).ln()));
    heuristic.push(variance.ln());
    heuristic.push((0.1 * variance).ln());
    for v in &mut heuristic {
        if !v.is_finite() {
            *v = f64::MIN;
        }
    }
    space.clamp(&mut heuristic);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![heuristic.clone()];
    for _ in 1..options.starts.max(1) {
        let mut x: Vec<f64> = heuristic
            .iter()
            .map(|v| v + rng.gen_range(-options.initial_step..=options.initial_step))
            .collect();
        space.clamp(&mut x);
        starts.push(x);
    }

    let mut objective = Objective {
        terms: &terms,
        deviations: &deviations,
        space: &space,
        evaluations: 0,
    };
    let start_lml: Vec<f64> = starts.iter().map(|x| objective.eval(x)).collect();
    let best_start = (0..starts.len())
        .filter(|&i| start_lml[i].is_finite())
        .fold(None, |best: Option<usize>, i| match best {
            Some(j) if start_lml[j] >= start_lml[i] => Some(j),
            _ => Some(i),
        })
        .ok_or(GpError::AllStartsFailed)?;

    let mut x = starts[best_start].clone();
    let mut fx = start_lml[best_start];
    let mut trace = vec![fx];
    let mut step = options.initial_step;
    let dims = x.len();
    while objective.evaluations + options.line_evals <= options.budget && step > 1e-3 {
        let before = fx;
        for c in 0..dims {
            if objective.evaluations + options.line_evals > options.budget {
                break;
            }
            let lo = (x[c] - step).max(space.lower[c]);
            let hi = (x[c] + step).min(space.upper[c]);
            if hi - lo < 1e-12 {
                continue;
            }
            let (v, fv) = golden_section(&mut objective, &x, c, lo, hi, options.line_evals);
            if fv > fx {
                x[c] = v;
                fx = fv;
            }
        }
        trace.push(fx);
        step *= 0.5;
        if fx - before < options.tolerance {
            break;
        }
    }

    let theta = space.theta(&x);
    let report = FitReport {
        evaluations: objective.evaluations,
        start_lml,
        best_start,
        lml_trace: trace,
        final_lml: fx,
    };
    log::debug!(
        "gp fit n={} lml={:.4} evals={}",
        inputs.len(),
        fx,
        report.evaluations
    );
    Ok(GpModel::new(inputs.to_vec(), targets.to_vec(), theta, prior_mean)?.with_report(report))
}

/// Maximizes the objective along coordinate `c` over `[lo, hi]` with
/// `evals` evaluations; returns the best point seen.
fn golden_section(
    objective: &mut Objective<'_>,
    x: &[f64],
    c: usize,
    mut lo: f64,
    mut hi: f64,
    evals: usize,
) -> (f64, f64) {
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut point = x.to_vec();
    let mut at = |v: f64, objective: &mut Objective<'_>| {
        point[c] = v;
        objective.eval(&point)
    };
    let mut p = hi - PHI * (hi - lo);
    let mut q = lo + PHI * (hi - lo);
    let mut fp = at(p, objective);
    let mut fq = at(q, objective);
    for _ in 2..evals {
        if fp >= fq {
            hi = q;
            q = p;
            fq = fp;
            p = hi - PHI * (hi - lo);
            fp = at(p, objective);
        } else {
            lo = p;
            p = q;
            fp = fq;
            q = lo + PHI * (hi - lo);
            fq = at(q, objective);
        }
    }
    if fp >= fq {
        (p, fp)
    } else {
        (q, fq)
    }
}
