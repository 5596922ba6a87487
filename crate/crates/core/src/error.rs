use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate normalization range on axis {axis}: min == max == {value}")]
    DegenerateAxis { axis: char, value: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("joint {joint} is not in front of the camera (depth {depth})")]
    BehindCamera { joint: usize, depth: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
