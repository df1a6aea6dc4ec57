use thiserror::Error;
use xtasc_tensor::TensorError;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("input {height}x{width} violates resolution constraint: {reason}")]
    Resolution { height: usize, width: usize, reason: String },
    #[error("{0}: every pixel is masked out")]
    EmptyMask(&'static str),
    #[error("corrupt dataset: {0}")]
    CorruptData(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset does not match model: {0}")]
    Mismatch(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("invalid metric input: {0}")]
    Metric(String),
}

impl CoreError {
    /// Stable machine-readable category, used for CLI error reports.
    pub fn category(&self) -> &'static str {
        match self {
            CoreError::Tensor(_) => "tensor",
            CoreError::Io(_) => "io",
            CoreError::Json(_) => "json",
            CoreError::Config(_) => "config",
            CoreError::Resolution { .. } => "resolution",
            CoreError::EmptyMask(_) => "empty_mask",
            CoreError::CorruptData(_) => "corrupt_data",
            CoreError::Checkpoint(_) => "checkpoint",
            CoreError::Mismatch(_) => "mismatch",
            CoreError::Divergence(_) => "divergence",
            CoreError::Metric(_) => "metric",
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn config_err(msg: impl Into<String>) -> CoreError {
    CoreError::Config(msg.into())
}
