//! Sparse non-negative matrix factorization by cyclic coordinate descent.
//!
//! Minimizes `½ Σ_{(i,j) observed} (D_ij − (WH)_ij)² + λ (ΣW + ΣH)` over
//! `W ≥ 0` (N×K) and `H ≥ 0` (K×M). Each coordinate takes the truncated
//! one-variable Newton step `x ← max(0, x − (g + λ)/c)`, which is the exact
//! minimizer of its quadratic subproblem on `[0, ∞)`, so the objective never
//! increases. A cycle updates all of `W` cluster by cluster, then all of `H`.
//!
//! When `λ > 0`, every cycle ends by rescaling each cluster `k` so that
//! `Σ_i W_ik = Σ_j H_kj`. `WH` is unchanged and, for a fixed product of the two
//! sums, equal sums minimize their total, so the penalty can only drop.
//!
//! Fully observed matrices use the cached products `DHᵀ`, `HHᵀ` (and `WᵀD`,
//! `WᵀW` for the `H` sweep). Matrices with missing cells keep an explicit
//! residual table over the observed cells instead.

mod persist;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::SpeedMatrix;

pub use persist::{read_factorization, write_factorization, FactorizationMeta};

pub const DEFAULT_LAMBDA: f64 = 100.0;
pub const DEFAULT_MAX_ITERS: usize = 200;

#[derive(Debug, Error)]
pub enum NmfError {
    #[error("rank K = {k} must be in 1..=min(N, M) = {max}")]
    InvalidRank { k: usize, max: usize },
    #[error("penalty lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("row {0} has no observed entries")]
    EmptyRow(usize),
    #[error("column {0} has no observed entries")]
    EmptyColumn(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("factor entries became non-finite at cycle {0}")]
    NonFinite(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

impl NmfError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, NmfError::NonFinite(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfConfig {
    pub k: usize,
    /// L1 penalty on all factor entries.
    pub lambda: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Stop once the relative drop of the objective over a cycle falls below
    /// this value. Zero disables early stopping.
    pub rel_tol: f64,
}

impl NmfConfig {
    pub fn new(k: usize) -> Self {
        NmfConfig {
            k,
            lambda: DEFAULT_LAMBDA,
            max_iters: DEFAULT_MAX_ITERS,
            seed: 0,
            rel_tol: 0.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    w: Array2<f64>,
    h: Array2<f64>,
    residual_trace: Vec<f64>,
    objective_trace: Vec<f64>,
    lambda: f64,
    seed: u64,
}

impl Factorization {
    pub(crate) fn from_parts(w: Array2<f64>, h: Array2<f64>, lambda: f64, seed: u64) -> Self {
        Factorization {
            w,
            h,
            residual_trace: Vec::new(),
            objective_trace: Vec::new(),
            lambda,
            seed,
        }
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn k(&self) -> usize {
        self.w.ncols()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Masked `Σ (D − WH)²`; entry `c` is the value after `c` completed
    /// cycles, entry 0 the initial state.
    pub fn residual_trace(&self) -> &[f64] {
        &self.residual_trace
    }

    /// Penalized objective, indexed like [`Self::residual_trace`].
    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    pub fn iterations(&self) -> usize {
        self.residual_trace.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_trace.last().copied().unwrap_or(f64::NAN)
    }

    pub fn product(&self) -> Array2<f64> {
        self.w.dot(&self.h)
    }
}

fn mask_f64(d: &SpeedMatrix) -> Array2<f64> {
    d.mask().mapv(|m| if m { 1.0 } else { 0.0 })
}

fn check_shapes(d: &SpeedMatrix, w: &Array2<f64>, h: &Array2<f64>) -> Result<(), NmfError> {
    if w.nrows() != d.rows() || h.ncols() != d.cols() || w.ncols() != h.nrows() {
        return Err(NmfError::Shape(format!(
            "D {}x{}, W {:?}, H {:?}",
            d.rows(),
            d.cols(),
            w.dim(),
            h.dim()
        )));
    }
    Ok(())
}

/// Masked residual `D − WH`, zero on unobserved cells.
fn masked_residual(d: &SpeedMatrix, mask: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> Array2<f64> {
    let mut r = d.values() - &w.dot(h);
    r *= mask;
    r
}

fn sum_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

/// `½ Σ_observed (D − WH)² + λ (ΣW + ΣH)`.
pub fn masked_loss(
    d: &SpeedMatrix,
    w: &Array2<f64>,
    h: &Array2<f64>,
    lambda: f64,
) -> Result<f64, NmfError> {
    check_shapes(d, w, h)?;
    let r = masked_residual(d, &mask_f64(d), w, h);
    Ok(0.5 * sum_sq(&r) + lambda * (w.sum() + h.sum()))
}

/// Newton step for one coordinate; `None` when the curvature vanishes.
#[inline]
fn newton_step(x: f64, grad: f64, curv: f64, lambda: f64) -> Option<f64> {
    (curv > 0.0).then(|| (x - (grad + lambda) / curv).max(0.0))
}

/// Coordinate sweep over `W` with an explicit masked residual; `r` is kept
/// consistent with the new `W`.
fn sweep_w_masked(
    mask: &Array2<f64>,
    r: &mut Array2<f64>,
    w: &mut Array2<f64>,
    h: &Array2<f64>,
    lambda: f64,
) {
    let (n, kk) = w.dim();
    for k in 0..kk {
        let hk = h.row(k);
        for i in 0..n {
            let ri = r.row(i);
            let mi = mask.row(i);
            let mut grad = 0.0;
            let mut curv = 0.0;
            for ((&rij, &mij), &hkj) in ri.iter().zip(mi.iter()).zip(hk.iter()) {
                grad -= rij * hkj;
                curv += mij * hkj * hkj;
            }
            let old = w[[i, k]];
            if let Some(new) = newton_step(old, grad, curv, lambda) {
                let delta = new - old;
                if delta != 0.0 {
                    w[[i, k]] = new;
                    let mut ri = r.row_mut(i);
                    for ((rij, &mij), &hkj) in ri.iter_mut().zip(mi.iter()).zip(hk.iter()) {
                        *rij -= delta * hkj * mij;
                    }
                }
            }
        }
    }
}

/// Coordinate sweep over `H`. Within one cluster `k` the updates of different
/// columns do not interact, so gradients for the whole row `H_k·` are
/// accumulated in one row-major pass.
fn sweep_h_masked(
    mask: &Array2<f64>,
    r: &mut Array2<f64>,
    w: &Array2<f64>,
    h: &mut Array2<f64>,
    lambda: f64,
) {
    let (n, kk) = w.dim();
    let m = h.ncols();
    let mut grad = vec![0.0; m];
    let mut curv = vec![0.0; m];
    let mut delta = vec![0.0; m];
    for k in 0..kk {
        grad.fill(0.0);
        curv.fill(0.0);
        for i in 0..n {
            let wik = w[[i, k]];
            if wik == 0.0 {
                continue;
            }
            let w2 = wik * wik;
            for (((g, c), &rij), &mij) in grad
                .iter_mut()
                .zip(curv.iter_mut())
                .zip(r.row(i).iter())
                .zip(mask.row(i).iter())
            {
                *g -= rij * wik;
                *c += mij * w2;
            }
        }
        let mut any = false;
        for j in 0..m {
            let old = h[[k, j]];
            delta[j] = match newton_step(old, grad[j], curv[j], lambda) {
                Some(new) => {
                    h[[k, j]] = new;
                    new - old
                }
                None => 0.0,
            };
            any |= delta[j] != 0.0;
        }
        if !any {
            continue;
        }
        for i in 0..n {
            let wik = w[[i, k]];
            if wik == 0.0 {
                continue;
            }
            let mut ri = r.row_mut(i);
            for ((rij, &mij), &dj) in ri.iter_mut().zip(mask.row(i).iter()).zip(delta.iter()) {
                *rij -= wik * dj * mij;
            }
        }
    }
}

/// `W` sweep for a fully observed `D` using cached `DHᵀ` and `HHᵀ`.
fn sweep_w_dense(d: &Array2<f64>, w: &mut Array2<f64>, h: &Array2<f64>, lambda: f64) {
    let dht = d.dot(&h.t());
    let hht = h.dot(&h.t());
    let (n, kk) = w.dim();
    for k in 0..kk {
        let curv = hht[[k, k]];
        let hht_k = hht.column(k);
        for i in 0..n {
            let whht: f64 = w.row(i).iter().zip(hht_k.iter()).map(|(a, b)| a * b).sum();
            let grad = whht - dht[[i, k]];
            if let Some(new) = newton_step(w[[i, k]], grad, curv, lambda) {
                w[[i, k]] = new;
            }
        }
    }
}

/// `H` sweep for a fully observed `D` using cached `WᵀD` and `WᵀW`.
fn sweep_h_dense(d: &Array2<f64>, w: &Array2<f64>, h: &mut Array2<f64>, lambda: f64) {
    let wtd = w.t().dot(d);
    let wtw = w.t().dot(w);
    let (kk, m) = h.dim();
    for k in 0..kk {
        let curv = wtw[[k, k]];
        for j in 0..m {
            let wtwh: f64 = (0..kk).map(|l| wtw[[k, l]] * h[[l, j]]).sum();
            let grad = wtwh - wtd[[k, j]];
            if let Some(new) = newton_step(h[[k, j]], grad, curv, lambda) {
                h[[k, j]] = new;
            }
        }
    }
}

/// Scales column `k` of `W` by `f` and row `k` of `H` by `1/f` with
/// `f = sqrt(ΣH_k· / ΣW_·k)`. Clusters with an all-zero side are left alone.
pub fn balance(w: &mut Array2<f64>, h: &mut Array2<f64>) {
    for k in 0..w.ncols() {
        let a = w.column(k).sum();
        let b = h.row(k).sum();
        if a > 0.0 && b > 0.0 {
            let f = (b / a).sqrt();
            if f.is_finite() && f != 1.0 {
                w.column_mut(k).mapv_inplace(|v| v * f);
                h.row_mut(k).mapv_inplace(|v| v / f);
            }
        }
    }
}

fn fully_observed(d: &SpeedMatrix) -> bool {
    d.mask().iter().all(|&m| m)
}

/// One full cycle (all of `W`, then all of `H`). Returns the masked squared
/// residual `Σ (D − WH)²` after the cycle.
pub fn cd_cycle(
    d: &SpeedMatrix,
    w: &mut Array2<f64>,
    h: &mut Array2<f64>,
    lambda: f64,
) -> Result<f64, NmfError> {
    check_shapes(d, w, h)?;
    let mask = mask_f64(d);
    if fully_observed(d) {
        sweep_w_dense(d.values(), w, h, lambda);
        sweep_h_dense(d.values(), w, h, lambda);
    } else {
        let mut r = masked_residual(d, &mask, w, h);
        sweep_w_masked(&mask, &mut r, w, h, lambda);
        sweep_h_masked(&mask, &mut r, w, h, lambda);
    }
    Ok(sum_sq(&masked_residual(d, &mask, w, h)))
}

/// Same as [`cd_cycle`] but always through the masked-residual route.
#[doc(hidden)]
pub fn cd_cycle_masked(
    d: &SpeedMatrix,
    w: &mut Array2<f64>,
    h: &mut Array2<f64>,
    lambda: f64,
) -> Result<f64, NmfError> {
    check_shapes(d, w, h)?;
    let mask = mask_f64(d);
    let mut r = masked_residual(d, &mask, w, h);
    sweep_w_masked(&mask, &mut r, w, h, lambda);
    sweep_h_masked(&mask, &mut r, w, h, lambda);
    Ok(sum_sq(&masked_residual(d, &mask, w, h)))
}

fn validate(d: &SpeedMatrix, cfg: &NmfConfig) -> Result<(), NmfError> {
    validate_params(d, cfg)?;
    let (rows, cols) = d.empty_rows_and_columns();
    if let Some(&i) = rows.first() {
        return Err(NmfError::EmptyRow(i));
    }
    if let Some(&j) = cols.first() {
        return Err(NmfError::EmptyColumn(j));
    }
    Ok(())
}

fn validate_params(d: &SpeedMatrix, cfg: &NmfConfig) -> Result<(), NmfError> {
    let max = d.rows().min(d.cols());
    if cfg.k == 0 || cfg.k > max {
        return Err(NmfError::InvalidRank { k: cfg.k, max });
    }
    if !(cfg.lambda.is_finite() && cfg.lambda >= 0.0) {
        return Err(NmfError::InvalidLambda(cfg.lambda));
    }
    Ok(())
}

/// Seeded uniform initialization on `[0, s)` with `s = sqrt(mean(D_obs)/K)`,
/// so that `WH` starts at the magnitude of the data.
pub fn initialize(d: &SpeedMatrix, k: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let nnz = d.nnz().max(1) as f64;
    let mean = d.observed().map(|(_, _, v)| v).sum::<f64>() / nnz;
    let scale = (mean / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |_| if scale > 0.0 { rng.gen_range(0.0..scale) } else { 0.0 };
    let w = Array2::from_shape_fn((d.rows(), k), &mut draw);
    let h = Array2::from_shape_fn((k, d.cols()), &mut draw);
    (w, h)
}

/// Factorizes the observed entries of `d`. Deterministic given `cfg`.
pub fn factorize(d: &SpeedMatrix, cfg: &NmfConfig) -> Result<Factorization, NmfError> {
    validate(d, cfg)?;
    run(d, cfg)
}

/// Like [`factorize`] but tolerates rows or columns without observations
/// (their factor entries keep their initial values). Used when cross-validation
/// hides every entry of a sparse line.
pub(crate) fn factorize_allow_empty(
    d: &SpeedMatrix,
    cfg: &NmfConfig,
) -> Result<Factorization, NmfError> {
    validate_params(d, cfg)?;
    run(d, cfg)
}

fn run(d: &SpeedMatrix, cfg: &NmfConfig) -> Result<Factorization, NmfError> {
    let (mut w, mut h) = initialize(d, cfg.k, cfg.seed);
    let mask = mask_f64(d);
    let dense = fully_observed(d);
    let penalty = |w: &Array2<f64>, h: &Array2<f64>| cfg.lambda * (w.sum() + h.sum());

    let mut r = masked_residual(d, &mask, &w, &h);
    let first = sum_sq(&r);
    let mut residual_trace = vec![first];
    let mut objective_trace = vec![0.5 * first + penalty(&w, &h)];

    for cycle in 1..=cfg.max_iters {
        if dense {
            sweep_w_dense(d.values(), &mut w, &h, cfg.lambda);
            sweep_h_dense(d.values(), &w, &mut h, cfg.lambda);
        } else {
            sweep_w_masked(&mask, &mut r, &mut w, &h, cfg.lambda);
            sweep_h_masked(&mask, &mut r, &w, &mut h, cfg.lambda);
        }
        if cfg.lambda > 0.0 {
            balance(&mut w, &mut h);
        }
        // recompute from scratch so rounding in the incremental table cannot drift
        r = masked_residual(d, &mask, &w, &h);
        let resid = sum_sq(&r);
        if !resid.is_finite() {
            return Err(NmfError::NonFinite(cycle));
        }
        let obj = 0.5 * resid + penalty(&w, &h);
        let prev = *objective_trace.last().expect("seeded with initial value");
        residual_trace.push(resid);
        objective_trace.push(obj);
        if cfg.rel_tol > 0.0 && prev > 0.0 && (prev - obj) / prev < cfg.rel_tol {
            break;
        }
    }

    Ok(Factorization {
        w,
        h,
        residual_trace,
        objective_trace,
        lambda: cfg.lambda,
        seed: cfg.seed,
    })
}

/// Completed matrix `max(WH, 0)`. Observed cells hold the approximation, not
/// the original value.
pub fn impute(d: &SpeedMatrix, f: &Factorization) -> Result<Array2<f64>, NmfError> {
    check_shapes(d, f.w(), f.h())?;
    Ok(f.product().mapv(|v| v.max(0.0)))
}
