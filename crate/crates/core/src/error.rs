use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the set of values an operation accepts (NaN, wrong shape, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Argument is well-formed but outside the mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violates a structural requirement (missing class, bad labels).
    #[error("data error: {0}")]
    Data(String),

    /// Data has no usable variance or too few correct samples.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The adversarial budget swallows the class separation; the robust weight is zero.
    #[error("degenerate budget: {0}")]
    DegenerateBudget(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("truncated file {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
