//! One agent-versus-simulated-human conversation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use imagine_backend::Backend;
use imagine_core::{dialogue_stream, Dialogue, Provenance, TaskDescription, TokenId, Tokenizer, Utterance};
use imagine_learners::{Decoding, PolicyArtifact};

use crate::detect::{DetectionMode, Detector};
use crate::error::{Result, SimError};
use crate::human::{is_acceptance, llm_human_respond, mix, scripted_human_respond, HumanKind, SimHumanSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Cap on agent plus human utterances.
    pub max_utterances: usize,
    pub episodes: usize,
    pub seed: u64,
    pub detection: DetectionMode,
    /// Sampling temperature for agent replies; 0 decodes greedily.
    pub temperature: f64,
    pub max_reply_tokens: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            max_utterances: 15,
            episodes: 50,
            seed: 0,
            detection: DetectionMode::Aliases,
            temperature: 1.0,
            max_reply_tokens: 32,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_utterances < 2 {
            return Err(SimError::InvalidConfig("max_utterances must be at least 2".into()));
        }
        if self.max_reply_tokens == 0 || !(self.temperature >= 0.0) {
            return Err(SimError::InvalidConfig("max_reply_tokens must be positive and temperature >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub ground_truth: String,
    pub persona_id: String,
    pub transcript: Dialogue,
    pub first_recommendation: Option<String>,
    pub final_success: bool,
    pub one_shot_success: bool,
    /// Tokens in each agent utterance, end-of-turn excluded.
    pub agent_tokens: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentReply {
    pub text: String,
    pub tokens: usize,
}

/// Anything that can take the agent's turn.
pub trait DialogueAgent: Sync {
    fn respond(&self, transcript: &[Utterance], rng: &mut ChaCha8Rng) -> Result<AgentReply>;
}

/// A trained policy decoding token by token.
pub struct PolicyAgent<'a> {
    pub artifact: &'a PolicyArtifact,
    pub decoding: Decoding,
    pub max_reply_tokens: usize,
}

impl<'a> PolicyAgent<'a> {
    pub fn new(artifact: &'a PolicyArtifact, cfg: &EvalConfig) -> Self {
        PolicyAgent {
            artifact,
            decoding: if cfg.temperature > 0.0 {
                Decoding::Sample {
                    temperature: cfg.temperature,
                }
            } else {
                Decoding::Greedy
            },
            max_reply_tokens: cfg.max_reply_tokens,
        }
    }
}

/// Token state at the start of an agent turn: the transcript stream followed
/// by the agent prefix.
pub fn agent_turn_state<T: Tokenizer + ?Sized>(transcript: &[Utterance], tokenizer: &T) -> Vec<TokenId> {
    let d = Dialogue {
        task_id: String::new(),
        persona_id: String::new(),
        reward: 0,
        provenance: Provenance::Live,
        utterances: transcript.to_vec(),
    };
    let (mut tokens, _) = dialogue_stream(&d, tokenizer);
    tokens.push(tokenizer.specials().agent_prefix);
    tokens
}

impl DialogueAgent for PolicyAgent<'_> {
    fn respond(&self, transcript: &[Utterance], rng: &mut ChaCha8Rng) -> Result<AgentReply> {
        let vocab = &self.artifact.vocab;
        let state = agent_turn_state(transcript, vocab);
        let mut out = self.artifact.decode_reply(&state, self.decoding, self.max_reply_tokens, rng)?;
        if out.last() == Some(&vocab.specials().end_of_turn) {
            out.pop();
        }
        Ok(AgentReply {
            text: vocab.detokenize(&out),
            tokens: out.len(),
        })
    }
}

pub enum HumanDriver<'a> {
    Scripted,
    Llm(&'a Backend),
}

impl HumanDriver<'_> {
    fn kind(&self) -> HumanKind {
        match self {
            HumanDriver::Scripted => HumanKind::Scripted,
            HumanDriver::Llm(_) => HumanKind::Llm,
        }
    }
}

/// Alternate agent and human turns until the human accepts a recommendation
/// or the utterance cap is reached. The human opens when the task has an
/// opening line.
pub fn run_episode(
    agent: &dyn DialogueAgent,
    task: &TaskDescription,
    human: &SimHumanSpec,
    driver: &HumanDriver,
    cfg: &EvalConfig,
    episode: usize,
) -> Result<EpisodeResult> {
    run_inner(agent, task, human, driver, cfg, episode).map_err(|e| e.in_episode(episode))
}

fn run_inner(
    agent: &dyn DialogueAgent,
    task: &TaskDescription,
    human: &SimHumanSpec,
    driver: &HumanDriver,
    cfg: &EvalConfig,
    episode: usize,
) -> Result<EpisodeResult> {
    cfg.validate()?;
    human.validate(task)?;
    if driver.kind() != human.kind {
        return Err(SimError::InvalidConfig("human spec kind does not match the driver".into()));
    }
    let detector = Detector::new(task, cfg.detection);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed, episode as u64 ^ 0xa6e7));
    let mut transcript: Vec<Utterance> = Vec::new();
    let mut agent_tokens = Vec::new();
    let mut first_recommendation: Option<String> = None;
    let mut final_success = false;

    let respond = |t: &[Utterance]| -> Result<Utterance> {
        match driver {
            HumanDriver::Scripted => Ok(scripted_human_respond(task, &detector, human, t)),
            HumanDriver::Llm(b) => llm_human_respond(task, human, t, b),
        }
    };

    if task.opening.is_some() {
        transcript.push(respond(&transcript)?);
    }
    while transcript.len() < cfg.max_utterances {
        let reply = agent.respond(&transcript, &mut rng)?;
        let text = if reply.text.trim().is_empty() { "...".to_string() } else { reply.text };
        let rec = detector.recommendation(&text).map(|i| i.name.clone());
        agent_tokens.push(reply.tokens);
        transcript.push(Utterance::agent(text));
        if first_recommendation.is_none() {
            first_recommendation.clone_from(&rec);
        }
        if transcript.len() >= cfg.max_utterances {
            break;
        }
        let answer = respond(&transcript)?;
        let accepted = rec.is_some() && is_acceptance(&answer.text);
        transcript.push(answer);
        if accepted {
            final_success = rec.as_deref().is_some_and(|r| r.eq_ignore_ascii_case(&human.ground_truth));
            break;
        }
    }

    let one_shot_success = final_success
        && first_recommendation
            .as_deref()
            .is_some_and(|r| r.eq_ignore_ascii_case(&human.ground_truth));
    Ok(EpisodeResult {
        episode,
        ground_truth: human.ground_truth.clone(),
        persona_id: human.persona.persona_id.clone(),
        transcript: Dialogue {
            task_id: task.task_id.clone(),
            persona_id: human.persona.persona_id.clone(),
            reward: u8::from(final_success),
            provenance: Provenance::Scripted,
            utterances: transcript,
        },
        first_recommendation,
        final_success,
        one_shot_success,
        agent_tokens,
    })
}

