use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("shape mismatch: {0}")]
    BadShape(String),

    #[error("index {index} out of range for dimension {dim}")]
    BadIndex { index: usize, dim: usize },

    #[error("invalid parameter: {0}")]
    BadParameter(String),

    /// Row and column are 1-based; the row counts data rows after the header.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("dataset needs at least {needed} rows, found {found}")]
    EmptyDataset { needed: usize, found: usize },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("expected a {expected} explanation, got {found}")]
    WrongExplanationKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("non-finite loss {value} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, value: f64 },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used by the CLI to choose an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NotPositiveDefinite { .. } | Error::NonFiniteLoss { .. } => {
                ErrorClass::Numerical
            }
            Error::Parse { .. }
            | Error::EmptyDataset { .. }
            | Error::UnknownColumn(_)
            | Error::Io { .. }
            | Error::Csv(_) => ErrorClass::Data,
            Error::BadShape(_)
            | Error::BadIndex { .. }
            | Error::BadParameter(_)
            | Error::WrongExplanationKind { .. }
            | Error::Config(_)
            | Error::Json(_) => ErrorClass::Config,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
