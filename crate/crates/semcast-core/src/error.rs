//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CoreError {
    pub fn shape(msg: impl Into<String>) -> Self {
        CoreError::ShapeMismatch(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::InvalidConfig(msg.into())
    }

    pub fn non_finite(msg: impl Into<String>) -> Self {
        CoreError::NonFinite(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        CoreError::Format(msg.into())
    }
}
