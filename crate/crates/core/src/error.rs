use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("end-of-turn action requires the human observation that follows it")]
    MissingObservation,
    #[error("dialogue {dialogue} has no agent tokens")]
    EmptyAgentTurns { dialogue: String },
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("invalid dialogue: {0}")]
    InvalidDialogue(String),
    #[error("transcript contains no \"AI:\" or \"H:\" utterances")]
    UnparseableTranscript,
    #[error("invalid task description: {0}")]
    InvalidTask(String),
    #[error("template is missing a value for slot {{{0}}}")]
    MissingSlot(String),
    #[error("{path}:{line}: {source}")]
    CorpusLine {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
