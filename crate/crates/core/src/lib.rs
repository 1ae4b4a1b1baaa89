//! Localized spatiotemporal Gaussian-process regression for road-segment
//! traffic speeds.
//!
//! The pipeline factorizes an observed speed matrix (segments × intervals of
//! day) with sparse non-negative matrix factorization, hardens the factors
//! into spatial and temporal clusters, and answers `(segment, time)` queries
//! with small Gaussian processes trained on the fly from the matching
//! cluster pair. Global and grid-partitioned GP baselines and a benchmark
//! harness are included.
//!
//! Modules follow the data flow:
//!
//! * [`data`]: road networks, speed observations, sliding-window matrices,
//!   per-segment features.
//! * [`nmf`]: masked sparse NMF by cyclic coordinate descent.
//! * [`localization`]: cluster assignment, query mapping, K selection, grid
//!   baseline.
//! * [`gp`]: directed-edge space-time kernels, marginal-likelihood fitting,
//!   posterior prediction.
//! * [`predictor`]: the six model variants.
//! * [`harness`]: synthetic data, metrics, significance tests, experiments.

pub mod data;
pub mod error;
pub mod gp;
pub mod harness;
pub mod localization;
pub mod nmf;
pub mod predictor;

pub use error::{Error, Result};
