use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("linear system is not solvable: {0}")]
    Unsolvable(String),

    #[error("did not converge after {iterations} iterations (last change {last_delta:e})")]
    NonConvergence { iterations: usize, last_delta: f64 },

    #[error("rank deficient system: rank {rank} of {dim}")]
    RankDeficient { rank: usize, dim: usize },

    #[error("eigen decomposition failed: {0}")]
    Eigen(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn param_err(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn validation_err(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
