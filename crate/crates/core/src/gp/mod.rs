//! Gaussian-process regression over `(road segment, time of day)` inputs.
//!
//! The covariance is separable in space and time. A segment `(u, v)` is
//! compared to `(u′, v′)` through its endpoints, `k(u, u′)·k(v, v′)`, so a
//! segment and its reverse are distinct inputs. Optional side information
//! (segment features) enters additively.

mod fit;
mod kernel;
mod linalg;
mod model;

use thiserror::Error;

pub use fit::{fit, FitOptions, FitReport, HyperBounds};
pub use kernel::{
    edge_kernel, rbf, side_kernel, spacetime_kernel, GpInput, KernelConfig, RbfForm, SideInfo,
};
pub use linalg::Cholesky;
pub use model::{gram, log_marginal_likelihood, GpModel, PredictiveDistribution};

/// Smallest noise variance the optimizer may select.
pub const MIN_NOISE_VARIANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("training set is empty")]
    Empty,
    #[error("{inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("fit needs at least 2 training points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite training response at index {0}")]
    NonFiniteResponse(usize),
    #[error("input {0} has non-finite coordinates or time outside [0, 1)")]
    BadInput(usize),
    #[error("side information required by the kernel is missing on input {0}")]
    MissingSideInfo(usize),
    #[error("side information dimensions differ from the kernel's: {0}")]
    SideInfoMismatch(String),
    #[error("invalid hyperparameter {name} = {value}")]
    InvalidHyperparameter { name: &'static str, value: f64 },
    #[error("Gram matrix not positive definite even with jitter {0:e}")]
    NotPositiveDefinite(f64),
    #[error("log marginal likelihood is not finite")]
    NonFiniteLikelihood,
    #[error("every optimizer start failed to factorize the Gram matrix")]
    AllStartsFailed,
}

#[cfg(test)]
mod tests;
