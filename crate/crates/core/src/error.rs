use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid time {0}: must be non-negative")]
    InvalidTime(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("graph is disconnected: {zeros} eigenvalues below {threshold:e}")]
    Disconnected { zeros: usize, threshold: f64 },

    #[error("step {step} violates explicit stability bound 2/lambda_max = {bound}")]
    Unstable { step: f64, bound: f64 },

    #[error("objective increased for {0} consecutive iterations with a fixed step; use backtracking or a smaller step")]
    StepSize(usize),

    #[error("horizon {horizon} too short for burn-in: exp(-lambda_2 * horizon) = {decay:e} >= 0.01")]
    HorizonTooShort { horizon: f64, decay: f64 },

    #[error("eigensolver did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("{path}: line {line}: {msg}")]
    Format {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{0}: no data values")]
    EmptyData(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
