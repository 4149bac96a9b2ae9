//! Synthesizes labeled dialogue corpora from a task description: personas
//! from a reasoning prompt, conditioned dialogues from an imagination prompt,
//! then critique passes that revise them.

pub mod corpus;
pub mod critique;
pub mod error;
pub mod imagine;
pub mod persona;
pub mod template_match;

pub use corpus::{assign_labels, generate_corpus, plan_specs, CorpusReport, FailedSpec, GenerateConfig};
pub use critique::{critique_dialogue, critique_prompt, CritiqueReport};
pub use error::{EngineError, Result};
pub use imagine::{imagination_prompt, imagine_dialogue, ImaginationSpec, SamplingSettings};
pub use persona::{bundle_personas, parse_personas, read_personas, synthesize_personas, write_personas, Persona};
pub use template_match::match_template;
