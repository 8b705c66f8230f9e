use thiserror::Error;

use crate::ntriples::{NTriplesError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    NTriples(#[from] NTriplesError),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{file} line {line}: {message}")]
    Format { file: String, line: usize, message: String },

    #[error("embedding dimension mismatch: expected {expected}, found {found} (line {line})")]
    DimensionMismatch { expected: usize, found: usize, line: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("non-finite loss for triple {triple}: {detail}")]
    NonFiniteLoss { triple: String, detail: String },

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged {
        epoch: usize,
        detail: String,
        /// Last parameter snapshot in which every value was finite.
        last_finite: Option<Box<crate::experts::PoeModel>>,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

impl From<ParseError> for Error {
    fn from(e: ParseError) -> Self {
        Error::NTriples(NTriplesError::Parse(e))
    }
}
