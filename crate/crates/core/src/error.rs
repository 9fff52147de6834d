//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad user-facing configuration (rejected before any work starts).
    #[error("configuration error: {0}")]
    Config(String),

    /// Parameter values outside the model's feasible set.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A simulated process would be unstable (branching ratio >= 1).
    #[error("unstable configuration: {0}")]
    Unstable(String),

    /// Malformed input data (event files, artifacts).
    #[error("data error: {0}")]
    Data(String),

    /// The solver failed to make progress.
    #[error("solver diverged: {0}")]
    Diverged(String),

    /// Inconsistent internal state; indicates a bug, not user error.
    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
