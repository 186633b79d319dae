//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative solver failed to reach its tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// Array or batch dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A probability vector or table violates its invariants.
    #[error("invalid distribution: {0}")]
    Distribution(String),

    /// Bad run configuration (CLI flags or TOML file).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
