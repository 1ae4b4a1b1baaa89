use std::f64::consts::PI;

use ndarray::Array2;
use serde::Serialize;

use super::fit::FitReport;
use super::kernel::{spacetime_kernel, GpInput, KernelConfig, SideInfo};
use super::linalg::Cholesky;
use super::GpError;

pub(crate) const MAX_JITTER: f64 = 1e-2;

pub(crate) fn validate_inputs(
    inputs: &[GpInput],
    targets: Option<&[f64]>,
    theta: &KernelConfig,
) -> Result<(), GpError> {
    if inputs.is_empty() {
        return Err(GpError::Empty);
    }
    if let Some(y) = targets {
        if y.len() != inputs.len() {
            return Err(GpError::LengthMismatch {
                inputs: inputs.len(),
                targets: y.len(),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(GpError::NonFiniteResponse(i));
        }
    }
    if let Some(i) = inputs.iter().position(|x| !x.is_valid()) {
        return Err(GpError::BadInput(i));
    }
    if theta.use_side_info {
        let first = side_of(inputs, 0)?;
        if theta.side_lengthscales.len() != first.numeric_groups() {
            return Err(GpError::SideInfoMismatch(format!(
                "{} side lengthscales for {} numeric features",
                theta.side_lengthscales.len(),
                first.numeric_groups()
            )));
        }
        for i in 0..inputs.len() {
            first.check_compatible(side_of(inputs, i)?)?;
        }
    }
    Ok(())
}

fn side_of(inputs: &[GpInput], i: usize) -> Result<&SideInfo, GpError> {
    inputs[i]
        .side
        .as_deref()
        .ok_or(GpError::MissingSideInfo(i))
}

fn gram_vec(inputs: &[GpInput], theta: &KernelConfig) -> Result<Vec<f64>, GpError> {
    let n = inputs.len();
    let mut k = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..=a {
            let v = spacetime_kernel(&inputs[a], &inputs[b], theta)?;
            k[a * n + b] = v;
            k[b * n + a] = v;
        }
    }
    Ok(k)
}

/// Pre-noise Gram matrix `K̂_X`.
pub fn gram(inputs: &[GpInput], theta: &KernelConfig) -> Result<Array2<f64>, GpError> {
    theta.validate()?;
    validate_inputs(inputs, None, theta)?;
    let n = inputs.len();
    let k = gram_vec(inputs, theta)?;
    Ok(Array2::from_shape_vec((n, n), k).expect("n × n"))
}

pub(crate) fn factor_with_noise(
    mut k: Vec<f64>,
    n: usize,
    noise: f64,
) -> Result<Cholesky, GpError> {
    for i in 0..n {
        k[i * n + i] += noise;
    }
    Cholesky::with_jitter_escalation(&k, n, MAX_JITTER).ok_or(GpError::NotPositiveDefinite(MAX_JITTER))
}

/// `−½ δYᵀ α − ½ log det(K̂ + σ²I) − (n/2) log 2π` with `α = (K̂ + σ²I)⁻¹ δY`.
pub(crate) fn lml_from_factor(chol: &Cholesky, deviations: &[f64]) -> (f64, Vec<f64>) {
    let mut alpha = deviations.to_vec();
    chol.solve(&mut alpha);
    let fit: f64 = deviations.iter().zip(&alpha).map(|(d, a)| d * a).sum();
    let n = deviations.len() as f64;
    let lml = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n * (2.0 * PI).ln();
    (lml, alpha)
}

/// Log density of `Y` under `N(μ₀·1, K̂ + σ²I)`.
pub fn log_marginal_likelihood(
    inputs: &[GpInput],
    targets: &[f64],
    theta: &KernelConfig,
    prior_mean: f64,
) -> Result<f64, GpError> {
    theta.validate()?;
    validate_inputs(inputs, Some(targets), theta)?;
    let n = inputs.len();
    let chol = factor_with_noise(gram_vec(inputs, theta)?, n, theta.noise_variance)?;
    let dev: Vec<f64> = targets.iter().map(|y| y - prior_mean).collect();
    let (lml, _) = lml_from_factor(&chol, &dev);
    if lml.is_finite() {
        Ok(lml)
    } else {
        Err(GpError::NonFiniteLikelihood)
    }
}

/// Posterior mean and variance per query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictiveDistribution {
    /// Posterior mean clamped at zero (speeds are non-negative).
    pub mean: Vec<f64>,
    /// Unclamped posterior mean.
    pub raw_mean: Vec<f64>,
    /// Posterior variance of the latent function; cancellation below zero
    /// is clamped.
    pub variance: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// A fitted GP: training data, hyperparameters and the factorized
/// `K̂_X + σ²I`. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct GpModel {
    inputs: Vec<GpInput>,
    targets: Vec<f64>,
    theta: KernelConfig,
    prior_mean: f64,
    chol: Cholesky,
    alpha: Vec<f64>,
    lml: f64,
    report: Option<FitReport>,
}

impl GpModel {
    /// Conditions the prior `GP(μ₀, k_Θ)` on `(inputs, targets)`.
    pub fn new(
        inputs: Vec<GpInput>,
        targets: Vec<f64>,
        theta: KernelConfig,
        prior_mean: f64,
    ) -> Result<Self, GpError> {
        theta.validate()?;
        validate_inputs(&inputs, Some(&targets), &theta)?;
        let n = inputs.len();
        let chol = factor_with_noise(gram_vec(&inputs, &theta)?, n, theta.noise_variance)?;
        let dev: Vec<f64> = targets.iter().map(|y| y - prior_mean).collect();
        let (lml, alpha) = lml_from_factor(&chol, &dev);
        if !lml.is_finite() {
            return Err(GpError::NonFiniteLikelihood);
        }
        Ok(GpModel {
            inputs,
            targets,
            theta,
            prior_mean,
            chol,
            alpha,
            lml,
            report: None,
        })
    }

    pub(crate) fn with_report(mut self, report: FitReport) -> Self {
        self.report = Some(report);
        self
    }

    pub fn theta(&self) -> &KernelConfig {
        &self.theta
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn inputs(&self) -> &[GpInput] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    /// Diagonal jitter that was needed to factorize the Gram matrix.
    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    pub fn fit_report(&self) -> Option<&FitReport> {
        self.report.as_ref()
    }

    /// Hyperparameters and the optimizer's likelihood trace as TOML.
    pub fn diagnostics(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            training_points: usize,
            prior_mean: f64,
            log_marginal_likelihood: f64,
            jitter: f64,
            theta: &'a KernelConfig,
            fit: Option<&'a FitReport>,
        }
        toml::to_string(&Dump {
            training_points: self.len(),
            prior_mean: self.prior_mean,
            log_marginal_likelihood: self.lml,
            jitter: self.jitter(),
            theta: &self.theta,
            fit: self.report.as_ref(),
        })
        .unwrap_or_default()
    }

    /// Posterior mean `μ₀ + k̂ᵀα` and variance `k(q,q) − k̂ᵀ(K̂ + σ²I)⁻¹k̂`.
    pub fn predict(&self, queries: &[GpInput]) -> Result<PredictiveDistribution, GpError> {
        if self.theta.use_side_info {
            let reference = self.inputs[0].side.as_deref().expect("validated at fit");
            for (i, q) in queries.iter().enumerate() {
                let side = q.side.as_deref().ok_or(GpError::MissingSideInfo(i))?;
                reference.check_compatible(side)?;
            }
        }
        if let Some(i) = queries.iter().position(|q| !q.is_valid()) {
            return Err(GpError::BadInput(i));
        }
        let n = self.len();
        let mut out = PredictiveDistribution {
            mean: Vec::with_capacity(queries.len()),
            raw_mean: Vec::with_capacity(queries.len()),
            variance: Vec::with_capacity(queries.len()),
        };
        let mut kq = vec![0.0; n];
        for q in queries {
            for (slot, x) in kq.iter_mut().zip(&self.inputs) {
                *slot = spacetime_kernel(x, q, &self.theta)?;
            }
            let raw = self.prior_mean + kq.iter().zip(&self.alpha).map(|(k, a)| k * a).sum::<f64>();
            self.chol.forward_solve(&mut kq);
            let explained: f64 = kq.iter().map(|v| v * v).sum();
            let prior = spacetime_kernel(q, q, &self.theta)?;
            out.raw_mean.push(raw);
            out.mean.push(raw.max(0.0));
            out.variance.push((prior - explained).max(0.0));
        }
        Ok(out)
    }
}
