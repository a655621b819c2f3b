//! Crate-wide error type and result alias.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, ChestError>;

/// Errors raised by geometry, losses, training, evaluation, and I/O.
#[derive(Debug, Error)]
pub enum ChestError {
    /// An input value was rejected before any computation ran.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two operands disagreed on dimensionality.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    /// A point left (or was never inside) the open ball.
    #[error("ball boundary violation: {0}")]
    Boundary(String),

    /// An operation requiring proxies received none.
    #[error("empty proxy set: {0}")]
    EmptyProxies(String),

    /// The problem instance is too small for the requested operation.
    #[error("degenerate problem: {0}")]
    Degenerate(String),

    /// A class or proxy index fell outside its valid range.
    #[error("index out of range: {what} = {index}, bound {bound}")]
    IndexOutOfRange {
        what: String,
        index: usize,
        bound: usize,
    },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A metric is undefined for the given data (e.g. no valid queries).
    #[error("undefined metric: {0}")]
    Undefined(String),

    /// A text artifact (dataset, checkpoint, config) failed to parse.
    #[error("parse error in {path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Configuration validation failed; every violated rule is listed.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Wraps an I/O error with the action and path so the message names the
/// file that failed.
pub(crate) fn io_context(action: &str, path: &std::path::Path, err: std::io::Error) -> ChestError {
    ChestError::Io(std::io::Error::new(
        err.kind(),
        format!("{action} {}: {err}", path.display()),
    ))
}

impl ChestError {
    /// Process exit code for the CLI: 1 for validation problems the user can
    /// fix by editing inputs, 2 for runtime and numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ChestError::InvalidInput(_)
            | ChestError::DimensionMismatch { .. }
            | ChestError::Parse { .. }
            | ChestError::Config(_) => 1,
            _ => 2,
        }
    }
}
