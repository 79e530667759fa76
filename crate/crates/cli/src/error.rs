use std::io;
use std::path::PathBuf;

use gateway_shield::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(Error::InvalidConfig(_) | Error::InvalidInput(_)) => 2,
            CliError::Core(Error::Parse { .. } | Error::Ordering(_) | Error::Io(_)) => 3,
            CliError::Io { .. } => 3,
            CliError::Verify(_) => 4,
            CliError::Core(Error::Invariant(_)) => 1,
        }
    }
}
