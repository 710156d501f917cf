use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("topology error: expected {expected} values, got {actual}")]
    Topology { expected: usize, actual: usize },

    #[error("empty sample: {0}")]
    EmptySample(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("archive is empty")]
    EmptyArchive,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("evaluation failed at {stage}, candidate {index}: {source}")]
    Evaluation {
        stage: String,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. } | Error::Io { .. } | Error::EmptySample(_) | Error::Shape(_) => 3,
            Error::Numerical(_) => 4,
            Error::Evaluation { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
