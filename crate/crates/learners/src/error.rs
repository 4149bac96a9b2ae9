use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("dataset vocabulary {dataset} does not match model vocabulary {model}")]
    VocabMismatch { dataset: String, model: String },
    #[error("non-finite loss at step {step}: q_loss={q_loss}, v_loss={v_loss}")]
    NonFiniteLoss { step: usize, q_loss: f64, v_loss: f64 },
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(usize, usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("state of {len} tokens exceeds the model context of {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] imagine_core::CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;
