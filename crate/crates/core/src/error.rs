use thiserror::Error;

use crate::analysis::FitResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("photon number {photons} exceeds the configured cap of {cap}")]
    Capacity { photons: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tag stream is not time ordered at record {index}")]
    Unsorted { index: usize },

    #[error("undefined estimate: {0}")]
    Undefined(String),

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        best: Box<FitResult>,
    },

    #[error("malformed tag file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
