//! Simulated-human evaluation: episodes between a dialogue agent and a
//! scripted or backend-driven human, success metrics, and an offline mock
//! world for running the whole pipeline without credentials.

pub mod ablation;
pub mod detect;
pub mod episode;
pub mod error;
pub mod human;
pub mod metrics;
pub mod mock_world;
pub mod runner;

pub use detect::{detect_recommendation, DetectionMode, Detector};
pub use episode::{run_episode, AgentReply, DialogueAgent, EpisodeResult, EvalConfig, HumanDriver, PolicyAgent};
pub use error::{Result, SimError};
pub use human::{is_acceptance, llm_human_respond, scripted_human_respond, HumanKind, SimHumanSpec};
pub use metrics::{compute_metrics, EvalMetrics};
pub use mock_world::MockWorld;
pub use runner::{evaluate, sample_humans, EvalReport};
