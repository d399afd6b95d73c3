//! Error types shared across the crate.

use thiserror::Error;

/// Everything that can go wrong building, training, or evaluating a model.
#[derive(Debug, Error)]
pub enum PrismError {
    /// Dimensions of two operands do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A file could not be parsed. Row numbers are 1-based data rows
    /// (the header is row 0).
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A configuration value is out of its documented domain.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A computation produced or received a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An input violates a documented invariant (weights not summing
    /// to one, probabilities out of range, ...).
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PrismError>;
