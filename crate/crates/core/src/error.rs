use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid term {0:?}: {1}")]
    InvalidTerm(String, &'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("model schema error: {0}")]
    Schema(String),

    #[error("feature order mismatch: model was trained with {found:?}")]
    FeatureOrderMismatch { found: Vec<String> },

    #[error("unknown document id {0:?}")]
    UnknownDocument(String),

    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),

    #[error("id mismatch in dataset {dataset:?}: {details}")]
    IdMismatch { dataset: String, details: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by the content of input data (as opposed to
    /// usage, configuration or I/O problems).
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::UnknownDocument(_)
            | Error::DuplicateDocument(_)
            | Error::IdMismatch { .. } => true,
            Error::Context { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
