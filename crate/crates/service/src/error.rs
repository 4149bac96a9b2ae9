use thiserror::Error;

use imagine_backend::BackendError;
use imagine_core::CoreError;
use imagine_engine::EngineError;
use imagine_learners::LearnError;
use imagine_sim::SimError;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} is closed")]
    SessionClosed(String),
    #[error("message text is empty")]
    EmptyMessage,
    #[error("{0}")]
    ContextOverflow(String),
    #[error("ratings must be integers in 1..=5, got {0:?}")]
    OutOfRangeRating(Vec<i64>),
    #[error("no route for {0}")]
    NoRoute(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("internal: {0}")]
    Internal(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    /// Stable machine-readable code for API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownPolicy(_) => "unknown_policy",
            ServiceError::UnknownTask(_) => "unknown_task",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::SessionClosed(_) => "session_closed",
            ServiceError::EmptyMessage => "empty_message",
            ServiceError::ContextOverflow(_) => "context_overflow",
            ServiceError::OutOfRangeRating(_) => "out_of_range_rating",
            ServiceError::NoRoute(_) => "not_found",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Config(_) => "config",
            _ => "internal",
        }
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
