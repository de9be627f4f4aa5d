//! Error types shared by the whole workspace.

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Dimension or extent mismatch between operands.
    #[error("shape error: {0}")]
    Shape(String),

    /// Input values outside the operation's domain (non-finite, zero divisor, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A tape handle does not belong to the tape it was used with.
    #[error("graph error: {0}")]
    Graph(String),

    /// Malformed on-disk data (bad magic, truncated payload, extent overflow).
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn graph(msg: impl Into<String>) -> Self {
        Error::Graph(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Process exit code for the CLI: 1 for validation failures, 2 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Format(_) => 2,
            _ => 1,
        }
    }
}
