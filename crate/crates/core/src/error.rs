use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge for matrix {matrix}")]
    NonConvergence { matrix: String },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("covariance lost positive semidefiniteness at t = {time} (min eigenvalue {min_eigenvalue})")]
    NotPositiveSemidefinite { time: f64, min_eigenvalue: f64 },

    #[error("search space of {size} candidates exceeds the cap of {cap}")]
    SearchTooLarge { size: f64, cap: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
