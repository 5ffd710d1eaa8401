//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by solvers, calculus transforms, norms, and audits.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range (e.g. theta < 1).
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An input point or time is outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Structured inputs violate a contract (parity, grid mismatch, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A run configuration is unusable (CFL violation, bad grid, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The operation refuses to produce a number (inapplicable estimate,
    /// compact-support check failed, mixed-k comparison, ...).
    #[error("refused: {0}")]
    Refused(String),

    /// Not enough data to produce the requested result.
    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
