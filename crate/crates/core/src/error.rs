use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("stack error: {0}")]
    Stack(String),
    #[error("empty stack")]
    EmptyStack,
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("validation error: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for failures caused by the filesystem or by unreadable/undecodable
    /// input files, as opposed to bad parameters or inconsistent data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
