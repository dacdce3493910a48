use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors fall in two buckets: bad input data ([`Error::is_input`]) and
/// violated preconditions of an otherwise well-formed request.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("{malformed} of {total} lines are malformed (limit 10%)")]
    TooManyMalformed { malformed: usize, total: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// True for problems with the input files themselves, as opposed to a
    /// request that cannot be satisfied on valid data.
    pub fn is_input(&self) -> bool {
        !matches!(self, Error::Precondition(_))
    }
}
