//! Operational surface for the imagination pipeline: the `imagine` CLI and a
//! small HTTP service that hosts trained policies for live chat and ratings.

pub mod api;
pub mod cli;
pub mod config;
pub mod error;
pub mod registry;
pub mod service;
pub mod sessions;

pub use config::{PipelineConfig, ServeConfig};
pub use error::{Result, ServiceError};
pub use registry::{PolicyRegistryEntry, PolicySource, Registry, RegistryFile};
pub use service::{ChatService, StartedSession};
pub use sessions::{ChatSession, Rating, SessionStore};
