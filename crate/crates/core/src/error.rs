use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a type invariant or an operation precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// A configured size cap or enumeration budget would be exceeded.
    #[error("resource limit: {0}")]
    Resource(String),

    /// The noise model is not supported by the requested engine.
    #[error("unsupported noise model: {0}")]
    UnsupportedModel(String),

    /// Arrays or states of incompatible dimension were combined.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("fit did not converge after {iterations} iterations (best residual {residual:e})")]
    FitNotConverged {
        iterations: usize,
        /// Best parameter vector reached, in the fit's natural order.
        params: Vec<f64>,
        residual: f64,
    },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
