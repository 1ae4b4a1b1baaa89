use thiserror::Error;

use crate::data::DataError;
use crate::gp::GpError;
use crate::harness::HarnessError;
use crate::localization::LocalizationError;
use crate::nmf::NmfError;
use crate::predictor::PredictorError;

pub type Result<T> = std::result::Result<T, Error>;

/// Top-level error, one variant per module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nmf(#[from] NmfError),
    #[error(transparent)]
    Localization(#[from] LocalizationError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Process exit codes used by the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Validation = 1,
    Data = 2,
    Numerical = 3,
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Error::Config(_) => ExitCode::Validation,
            Error::Io { .. } => ExitCode::Data,
            Error::Data(_) => ExitCode::Data,
            Error::Nmf(e) => {
                if e.is_numerical() {
                    ExitCode::Numerical
                } else {
                    ExitCode::Validation
                }
            }
            Error::Localization(e) => match e {
                LocalizationError::Nmf(inner) if inner.is_numerical() => ExitCode::Numerical,
                _ => ExitCode::Validation,
            },
            Error::Gp(_) => ExitCode::Numerical,
            Error::Predictor(e) => match e {
                PredictorError::Gp(_) => ExitCode::Numerical,
                PredictorError::Nmf(inner) if inner.is_numerical() => ExitCode::Numerical,
                _ => ExitCode::Validation,
            },
            Error::Harness(e) => match e {
                HarnessError::Data(_) | HarnessError::Csv(_) => ExitCode::Data,
                HarnessError::Predictor(PredictorError::Gp(_)) => ExitCode::Numerical,
                _ => ExitCode::Validation,
            },
        }
    }
}
