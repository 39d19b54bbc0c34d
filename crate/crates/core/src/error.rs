use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum TatError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numeric failure in block {block}: {message}")]
    Numeric { block: usize, message: String },

    #[error("episode sampling error: {0}")]
    Sampling(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TatError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TatError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(record: impl Into<String>, message: impl Into<String>) -> Self {
        TatError::Parse {
            record: record.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = TatError> = std::result::Result<T, E>;
