use std::path::PathBuf;

use mvpose_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RigError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("output directory {0} is not empty (pass overwrite to replace it)")]
    OutputNotEmpty(PathBuf),
    #[error("invalid rig configuration: {0}")]
    Config(String),
}

impl RigError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RigError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = RigError> = std::result::Result<T, E>;
