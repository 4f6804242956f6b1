use std::path::PathBuf;

use thiserror::Error;

/// Everything a command can fail with, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sbs_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Bad flag values, config contents or inconsistent inputs.
    #[error("{0}")]
    Param(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 1 for I/O and undecodable files, 2 for parameter and validation errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 1,
            CliError::Io { .. } => 1,
            CliError::Core(_) | CliError::Param(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
