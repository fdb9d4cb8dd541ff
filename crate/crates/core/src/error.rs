//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the adapter toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two operands do not conform.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A scalar argument is outside its valid domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A configuration violates one of its invariants.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A file does not look like the expected format (bad magic, version,
    /// or enum tag).
    #[error("format error: {0}")]
    Format(String),

    /// A file has the right framing but damaged or truncated contents.
    #[error("corrupt file: {0}")]
    Corrupt(String),

    /// A named tensor required by an operation is absent.
    #[error("missing tensor: {0}")]
    MissingTensor(String),

    /// The operation does not apply to this adapter method.
    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    /// Training produced a non-finite loss and was aborted.
    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
