//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (bad qubit count, bad hyperparameter, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid argument to an operation.
    #[error("argument error: {0}")]
    Argument(String),

    /// Qubit or element index out of range.
    #[error("index error: {0}")]
    Index(String),

    /// Tensor or vector shape mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// File does not match the expected on-disk format.
    #[error("format error: {0}")]
    Format(String),

    /// File is structurally valid but its payload is damaged.
    #[error("corruption error: {0}")]
    Corruption(String),

    /// Operation called in the wrong order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),

    /// Requested operation is deliberately not implemented.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Numerical failure during training (non-finite loss or gradient).
    #[error("training error: {0}")]
    Training(String),

    /// Checkpoint architecture does not match the requested model.
    #[error("architecture mismatch:\n{0}")]
    ArchMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
