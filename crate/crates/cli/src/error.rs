use std::path::PathBuf;

use padfree_core::Error as CoreError;

use crate::checkpoint::CheckpointError;
use crate::ppm::PpmError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Ppm(#[from] PpmError),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid {field}: {message}")]
    Input { field: String, message: String },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn input(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Input { field: field.into(), message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for checkpoint format problems, 3 for shape underflow, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Checkpoint(_) => 2,
            CliError::Core(CoreError::ShapeUnderflow { .. }) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
