use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MklError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {message} (condition estimate {condition:e})")]
    Numerical { message: String, condition: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("optimizer failure: {0}")]
    Optimizer(String),
}

pub type Result<T> = std::result::Result<T, MklError>;

pub(crate) fn invalid(msg: impl Into<String>) -> MklError {
    MklError::InvalidInput(msg.into())
}

pub(crate) fn dimension(msg: impl Into<String>) -> MklError {
    MklError::Dimension(msg.into())
}
