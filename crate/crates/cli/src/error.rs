use std::path::PathBuf;

use mqc_relax::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("data: {0}")]
    Data(String),

    #[error("{0}")]
    NotConverged(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::NotConverged(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Classifies a library error raised while handling configuration.
    pub fn config(e: CoreError) -> Self {
        CliError::Config(e.to_string())
    }

    /// Classifies a library error raised while handling curve data, with
    /// `context` naming the file or kind involved.
    pub fn data(context: &str, e: CoreError) -> Self {
        match e {
            CoreError::NotConverged { .. } => CliError::NotConverged(format!("{context}: {e}")),
            _ => CliError::Data(format!("{context}: {e}")),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
