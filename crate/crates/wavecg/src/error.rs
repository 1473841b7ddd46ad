use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("pole or singularity: {0}")]
    Singular(String),
    #[error("shift {shift} is (numerically) an eigenvalue; nearest eigenvalue estimate {nearest}")]
    EigenvalueHit { shift: String, nearest: String },
    #[error("property violation: {0}")]
    PropertyViolation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("state dimension {dim} exceeds the dense limit {limit}; reduce n_u, n_w or coarsen the history grid")]
    TooLarge { dim: usize, limit: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
}

pub type Result<T> = std::result::Result<T, Error>;
