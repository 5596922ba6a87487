use std::path::PathBuf;

use mvpose_core::CoreError;
use mvpose_rig::RigError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Rig(#[from] RigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite {stage} loss {loss} at epoch {epoch}, batch {batch} (step {step})")]
    NonFiniteLoss {
        stage: &'static str,
        epoch: usize,
        batch: usize,
        step: usize,
        loss: f64,
    },
    #[error("model/data mismatch: {0}")]
    Mismatch(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        HarnessError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            HarnessError::Core(CoreError::Io(_)) | HarnessError::Io { .. } => "io",
            HarnessError::Rig(RigError::Io { .. }) => "io",
            HarnessError::Core(CoreError::Config(_) | CoreError::Unsupported(_)) => "config",
            HarnessError::Rig(RigError::Config(_) | RigError::OutputNotEmpty(_)) => "config",
            HarnessError::Config(_) => "config",
            HarnessError::Core(CoreError::Checkpoint(_)) => "checkpoint",
            HarnessError::Format { .. } | HarnessError::Rig(RigError::Format { .. }) => "format",
            HarnessError::EmptySplit(_) => "data",
            HarnessError::NonFiniteLoss { .. } | HarnessError::Core(CoreError::NonFinite(_)) => "numeric",
            HarnessError::Mismatch(_) | HarnessError::Core(_) | HarnessError::Rig(_) => "model",
        }
    }

    /// Process exit code for the category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "config" => 2,
            "io" => 3,
            "format" => 4,
            "data" => 5,
            "numeric" => 6,
            "checkpoint" => 7,
            _ => 8,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
