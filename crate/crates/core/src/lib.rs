//! Core types for the imagined-dialogue toolkit.
//!
//! A dialogue is a speaker-tagged transcript with a binary outcome label. For
//! learning, it is flattened into a token stream and cut into one transition
//! per agent token: the agent acts one token at a time, and when it emits the
//! end-of-turn marker the environment appends the human's reply.

pub mod corpus;
pub mod dialogue;
pub mod error;
pub mod mdp;
pub mod task;
pub mod transcript;
pub mod vocab;

pub use dialogue::{Dialogue, Provenance, Speaker, Utterance};
pub use error::{CoreError, Result};
pub use mdp::{
    advance_state, build_dataset, dialogue_stream, postprocess_dialogue, Transition,
    TransitionDataset,
};
pub use task::{CatalogItem, Category, PromptTemplate, TaskDescription};
pub use transcript::{parse_transcript, render_dialogue, render_marked};
pub use vocab::{canonicalize, SpecialTokens, TokenId, Tokenizer, Vocab};
