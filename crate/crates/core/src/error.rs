//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration values (bad ranges, empty layer lists, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Mismatched vector/matrix dimensions.
    #[error("shape error: {0}")]
    Shape(String),

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A loss correction could not be applied (e.g. singular transition matrix).
    #[error("correction error: {0}")]
    Correction(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Label or sample index out of range.
    #[error("index error: {0}")]
    Index(String),

    /// A dataset audit failed (missing true labels, inconsistent sidecar).
    #[error("audit error: {0}")]
    Audit(String),

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    /// An exact-verification check exceeded its tolerance.
    #[error("oracle deviation: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
