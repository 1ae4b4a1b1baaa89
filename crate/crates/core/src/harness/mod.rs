//! Benchmark plumbing: synthetic cities, error metrics, the Wilcoxon
//! signed-rank test and the sliding-window experiment runner.

mod config;
mod experiment;
mod metrics;
mod synth;

use std::path::Path;

use thiserror::Error;

use crate::data::DataError;
use crate::localization::LocalizationError;
use crate::nmf::NmfError;
use crate::predictor::PredictorError;

pub use config::ConfigFile;
pub use experiment::{
    covered_segments, run_experiment, write_outputs, ExperimentConfig, ExperimentOutput, PredictionRow,
    SignificanceRow, TrialResult, SIGNIFICANCE_PAIRS,
};
pub use metrics::{
    metrics, wilcoxon_signed_rank, Metrics, WilcoxonResult, MAPE_MIN_TRUTH, WILCOXON_EXACT_MAX,
};
pub use synth::{generate_synthetic, write_synthetic, SynthSpec, SyntheticData};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error(transparent)]
    Nmf(#[from] NmfError),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("metric: {0}")]
    Metric(String),
    #[error("wilcoxon test: {0}")]
    Wilcoxon(String),
    #[error("synthetic spec: {0}")]
    Synth(String),
    #[error("experiment configuration: {0}")]
    Config(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl AsRef<Path>, e: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.as_ref().display().to_string(),
            message: e.to_string(),
        }
    }
}

#[cfg(test)]
mod tests;
