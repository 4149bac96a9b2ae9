//! Simulated humans: a deterministic rule table, or a completion backend
//! prompted with the task's human template.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use imagine_backend::{Backend, CompletionRequest};
use imagine_core::transcript::render_utterances;
use imagine_core::{parse_transcript, Speaker, TaskDescription, Utterance};
use imagine_engine::Persona;

use crate::detect::Detector;
use crate::error::{Result, SimError};

pub const HUMAN_TEMPLATE: &str = "human";

pub const DEFAULT_OPENING: &str = "Hi, I am looking for activities to do on my trip.";
pub const ACCEPT_REPLY: &str = "That sounds perfect!";
pub const REJECT_REPLY: &str = "No, I do not like that.";
pub const NEGATIVE_REPLY: &str = "No, not really.";
pub const VAGUE_REPLY: &str = "I'm not sure, maybe.";
pub const GENERIC_REPLY: &str = "Can you help me find something fun to do?";

/// Vagueness given to personas whose name marks them as indecisive.
pub const INDECISIVE_VAGUENESS: f64 = 0.3;

const ACCEPT_PHRASES: &[&str] = &["perfect", "let's do it", "sounds great", "i'll take it", "i'd love that"];
const NEGATION_WORDS: &[&str] = &["no", "not", "nope", "never"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HumanKind {
    #[default]
    Scripted,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimHumanSpec {
    pub kind: HumanKind,
    /// Catalog item the human would accept.
    pub ground_truth: String,
    pub persona: Persona,
    pub vagueness: f64,
    pub seed: u64,
}

impl SimHumanSpec {
    pub fn new(kind: HumanKind, ground_truth: &str, persona: Persona, seed: u64) -> Self {
        let vagueness = persona_vagueness(&persona);
        SimHumanSpec {
            kind,
            ground_truth: ground_truth.to_string(),
            persona,
            vagueness,
            seed,
        }
    }

    pub fn validate(&self, task: &TaskDescription) -> Result<()> {
        if task.item(&self.ground_truth).is_none() {
            return Err(SimError::InvalidConfig(format!(
                "ground truth {:?} is not in the {} catalog",
                self.ground_truth, task.task_id
            )));
        }
        if !(0.0..=1.0).contains(&self.vagueness) {
            return Err(SimError::InvalidConfig(format!("vagueness {} not in [0,1]", self.vagueness)));
        }
        Ok(())
    }
}

pub fn persona_vagueness(persona: &Persona) -> f64 {
    if persona.name.to_lowercase().contains("indecisive") {
        INDECISIVE_VAGUENESS
    } else {
        0.0
    }
}

/// Whether a human reply accepts the recommendation it answers.
pub fn is_acceptance(text: &str) -> bool {
    let t = text.to_lowercase();
    let negated = t
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .any(|w| NEGATION_WORDS.contains(&w) || w.ends_with("n't"));
    ACCEPT_PHRASES.iter().any(|p| t.contains(p)) && !negated
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn human_turn(transcript: &[Utterance]) -> u64 {
    transcript.iter().filter(|u| u.speaker == Speaker::Human).count() as u64
}

/// Rule-table reply to the transcript so far. The random draw for vagueness
/// depends only on the spec seed and the turn number.
pub fn scripted_human_respond(
    task: &TaskDescription,
    detector: &Detector,
    spec: &SimHumanSpec,
    transcript: &[Utterance],
) -> Utterance {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, human_turn(transcript)));
    let vague = rng.gen::<f64>() < spec.vagueness;
    let Some(last) = transcript.last().filter(|u| u.speaker == Speaker::Agent) else {
        return Utterance::human(task.opening.as_deref().unwrap_or(DEFAULT_OPENING));
    };
    if let Some(item) = detector.recommendation(&last.text) {
        return Utterance::human(if item.name.eq_ignore_ascii_case(&spec.ground_truth) {
            ACCEPT_REPLY
        } else {
            REJECT_REPLY
        });
    }
    if vague {
        return Utterance::human(VAGUE_REPLY);
    }
    match detector.category(&last.text) {
        Some(c) => {
            let liked = task
                .item(&spec.ground_truth)
                .is_some_and(|i| i.category.eq_ignore_ascii_case(&c.name));
            if liked {
                Utterance::human(format!("Yes, I love {}!", c.name))
            } else {
                Utterance::human(NEGATIVE_REPLY)
            }
        }
        None => Utterance::human(GENERIC_REPLY),
    }
}

pub fn human_prompt_values(task: &TaskDescription, spec: &SimHumanSpec, transcript: &[Utterance]) -> BTreeMap<String, String> {
    let category = task
        .item(&spec.ground_truth)
        .map_or_else(|| spec.ground_truth.clone(), |i| i.category.clone());
    BTreeMap::from([
        ("persona".to_string(), spec.persona.name.clone()),
        ("persona_description".to_string(), spec.persona.description.clone()),
        ("topic".to_string(), spec.ground_truth.clone()),
        ("category".to_string(), category),
        ("transcript".to_string(), render_utterances(transcript).trim_end().to_string()),
        ("task_description".to_string(), task.description.clone()),
    ])
}

/// First human utterance of a completion that continues after a trailing
/// `H:`. Any agent lines the model invents are dropped.
pub fn parse_human_completion(text: &str) -> Result<Utterance> {
    let t = text.trim_start();
    let framed = if t.starts_with("AI:") || t.starts_with("H:") {
        t.to_string()
    } else {
        format!("H: {t}")
    };
    parse_transcript(&framed)
        .map_err(|_| SimError::UnparseableTranscript)?
        .into_iter()
        .find(|u| u.speaker == Speaker::Human)
        .ok_or(SimError::UnparseableTranscript)
}

pub fn llm_human_respond(
    task: &TaskDescription,
    spec: &SimHumanSpec,
    transcript: &[Utterance],
    backend: &Backend,
) -> Result<Utterance> {
    let prompt = task
        .template(HUMAN_TEMPLATE)?
        .render(&human_prompt_values(task, spec, transcript))?;
    let req = CompletionRequest::new(prompt)
        .with_seed(mix(spec.seed, human_turn(transcript)))
        .with_temperature(0.7)
        .with_max_tokens(128);
    parse_human_completion(&backend.complete(&req)?.text)
}
