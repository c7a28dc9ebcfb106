use std::path::PathBuf;

/// Errors surfaced by the library. The CLI maps these onto exit-code
/// categories, so the variants are grouped by failure kind rather than by
/// module.
#[derive(Debug, thiserror::Error)]
pub enum BvsError {
    /// Bad arguments, malformed configuration, or data that violates a
    /// documented precondition (dimension mismatch, non-finite value, ...).
    #[error("validation: {0}")]
    Validation(String),

    /// File-level I/O or parse failures.
    #[error("io: {path}: {message}")]
    Io { path: PathBuf, message: String },

    /// A numeric operation failed in a way that cannot be recovered from
    /// (factorization of a matrix that should be SPD, quadrature that never
    /// stabilizes, ...).
    #[error("numeric: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, BvsError>;

impl BvsError {
    pub fn validation(msg: impl Into<String>) -> Self {
        BvsError::Validation(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        BvsError::Numeric(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, msg: impl std::fmt::Display) -> Self {
        BvsError::Io {
            path: path.into(),
            message: msg.to_string(),
        }
    }
}
