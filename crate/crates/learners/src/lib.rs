//! Learners for imagined dialogue corpora: behavior cloning, filtered
//! behavior cloning and offline value learning with expectile V and Bellman
//! Q heads, plus value-guided decoding.

pub mod bc;
pub mod config;
pub mod error;
pub mod heads;
pub mod losses;
pub mod model;
pub mod optim;
pub mod policy;
pub mod rl;

pub use bc::{bc_examples, bc_loss, filter_successful, masked_nll, train_bc, BcExample, BcLogRow};
pub use config::TrainConfig;
pub use error::{LearnError, Result};
pub use heads::{polyak_update, ValueHeads};
pub use losses::{loss_and_grad, q_loss, q_loss_hidden, v_loss, v_loss_hidden, HiddenTransition, LossParts};
pub use model::{BaseModel, ContextMlp, Features, Forward, MlpSpec, SequenceModel, TabularModel, TabularSpec};
pub use optim::AdamW;
pub use policy::{extract_policy_logits, Decoding, Manifest, PolicyArtifact, PolicyKind};
pub use rl::{train_rl, train_rl_from, RlLogRow, RlOutcome};
