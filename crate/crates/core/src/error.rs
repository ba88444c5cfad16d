use pcfg_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PcfError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("degenerate rotation: {0}")]
    DegenerateRotation(String),
    #[error("{0}")]
    Tensor(#[from] TensorError),
    #[error("training aborted in scene `{scene}`: non-finite {term}")]
    Training { scene: String, term: String },
    #[error("checkpoint not found: {0}")]
    CheckpointMissing(String),
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

impl PcfError {
    /// Stable machine-readable code, used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            PcfError::Argument(_) => "ARGUMENT",
            PcfError::Validation(_) => "VALIDATION",
            PcfError::DegenerateRotation(_) => "DEGENERATE_ROTATION",
            PcfError::Tensor(TensorError::Shape { .. }) => "DIMENSION",
            PcfError::Tensor(TensorError::NonFiniteGradient { .. }) => "TRAINING",
            PcfError::Tensor(_) => "TENSOR",
            PcfError::Training { .. } => "TRAINING",
            PcfError::CheckpointMissing(_) => "CHECKPOINT_MISSING",
            PcfError::Io { .. } => "IO",
            PcfError::Parse { .. } => "PARSE",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, e: impl std::fmt::Display) -> Self {
        PcfError::Io {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, e: impl std::fmt::Display) -> Self {
        PcfError::Parse {
            path: path.as_ref().display().to_string(),
            msg: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, PcfError>;

pub(crate) fn argument<T>(msg: impl Into<String>) -> Result<T> {
    Err(PcfError::Argument(msg.into()))
}

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(PcfError::Validation(msg.into()))
}
