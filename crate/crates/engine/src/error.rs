use thiserror::Error;

use imagine_backend::BackendError;
use imagine_core::CoreError;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("no enumerated persona entries found in the completion")]
    UnparseablePersonaList,
    #[error("completion contains no \"AI:\" or \"H:\" utterances")]
    UnparseableTranscript,
    #[error("imagined dialogue is empty or lacks one of the two speakers")]
    EmptyDialogue,
    #[error("only {produced} of {requested} dialogues were generated ({failed} failed)")]
    Shortfall { requested: usize, produced: usize, failed: usize },
    #[error("task has no personas; run the reasoning step first")]
    NoPersonas,
    #[error("task has no topics")]
    NoTopics,
    #[error("invalid generation settings: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Core(CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<CoreError> for EngineError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::UnparseableTranscript => EngineError::UnparseableTranscript,
            other => EngineError::Core(other),
        }
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;
