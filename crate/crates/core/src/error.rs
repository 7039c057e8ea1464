//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or configuration mismatch (basis vs. coefficients, weights vs. config).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a documented precondition (too short, empty, non-finite).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Training aborted (diverging loss, NaN parameters).
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Malformed on-disk artifact (container, CSV, WAV, PNG).
    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
