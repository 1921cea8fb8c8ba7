use std::path::PathBuf;

/// Errors raised anywhere in the trainer.
///
/// Variants are grouped by [`ErrorKind`] so front ends can map them to
/// process exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Invalid(_) => ErrorKind::Usage,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Data(_)
            | Error::Sampling(_)
            | Error::Checkpoint(_) => ErrorKind::Data,
            Error::Shape(_) | Error::NonFinite(_) | Error::NotPositiveDefinite { .. } => {
                ErrorKind::Numerical
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
