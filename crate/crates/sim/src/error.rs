use thiserror::Error;

use imagine_backend::BackendError;
use imagine_core::CoreError;
use imagine_engine::EngineError;
use imagine_learners::LearnError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no episode results to aggregate")]
    EmptyResults,
    #[error("invalid evaluation setup: {0}")]
    InvalidConfig(String),
    #[error("simulated human completion has no \"H:\" utterance")]
    UnparseableTranscript,
    #[error("episode {episode}: {source}")]
    Episode {
        episode: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SimError {
    pub fn in_episode(self, episode: usize) -> Self {
        match self {
            e @ SimError::Episode { .. } => e,
            e => SimError::Episode {
                episode,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
