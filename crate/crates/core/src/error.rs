use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction library.
#[derive(Debug, Error)]
pub enum Error {
    /// Image dimensions are unusable (zero, overflowing, or too small for the operation).
    #[error("size error: {0}")]
    Size(String),

    /// An argument violates an operation precondition.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// No sufficiently dominant lobe was found in a search region.
    #[error("lobe not found: {0}")]
    LobeNotFound(String),

    /// A numerical invariant was violated internally.
    #[error("internal error: {0}")]
    Internal(String),

    /// A file does not follow the expected container or document format.
    #[error("format error in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn size(msg: impl Into<String>) -> Self {
        Error::Size(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the measurement itself rather than of the input.
    pub fn is_domain_failure(&self) -> bool {
        matches!(self, Error::LobeNotFound(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
