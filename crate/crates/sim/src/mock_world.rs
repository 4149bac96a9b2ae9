//! Offline stand-in for a completion backend: answers reasoning,
//! imagination, critique and simulated-human prompts for a task bundle.
//!
//! Travel-style tasks (those with a catalog) imagine dialogues by playing a
//! random, mildly sensible agent against the scripted human and keeping a
//! rollout whose outcome matches the requested label.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use imagine_backend::MockBackend;
use imagine_core::task::{CRITIQUE, IMAGINATION, REASONING};
use imagine_core::transcript::render_utterances;
use imagine_core::{parse_transcript, CatalogItem, TaskDescription, Utterance};
use imagine_engine::{match_template, Persona};

use crate::detect::{DetectionMode, Detector};
use crate::human::{scripted_human_respond, HumanKind, SimHumanSpec, HUMAN_TEMPLATE};

pub const MAX_IMAGINED_UTTERANCES: usize = 15;
const MAX_ROLLOUTS: usize = 2000;

const DEFAULT_PERSONAS: &str = "(1) newcomer: has little experience and needs simple guidance\n\
(2) enthusiast: knows the basics and wants specific suggestions\n\
(3) busy planner: wants short, concrete answers";

/// Probabilities of the imagined agent's choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImaginedAgent {
    /// Chance of asking about a category rather than recommending.
    pub ask: f64,
    /// Chance of recommending inside a category the human said they like.
    pub use_liked: f64,
}

impl Default for ImaginedAgent {
    fn default() -> Self {
        ImaginedAgent { ask: 0.5, use_liked: 0.5 }
    }
}

const QUESTION_FORMS: [&str; 2] = ["Do you enjoy {}?", "Are you into {}?"];
const RECOMMEND_FORMS: [&str; 2] = ["I recommend {}.", "You should try {}."];

fn phrase(forms: &[&str; 2], x: &str, rng: &mut ChaCha8Rng) -> String {
    forms.choose(rng).expect("forms").replace("{}", x)
}

/// Reward label a rendered prompt was conditioned on: 1 when every success
/// slot appears with its success value.
pub fn infer_reward(task: &TaskDescription, values: &BTreeMap<String, String>) -> u8 {
    let s = &task.reward_slots.success;
    let f = &task.reward_slots.failure;
    let agrees = |m: &BTreeMap<String, String>| m.iter().filter(|(k, v)| values.get(*k) == Some(v)).count();
    u8::from(!s.is_empty() && agrees(s) > agrees(f))
}

/// One rollout of the imagined agent against the scripted human.
fn rollout(
    task: &TaskDescription,
    detector: &Detector,
    spec: &SimHumanSpec,
    agent: ImaginedAgent,
    rng: &mut ChaCha8Rng,
) -> (Vec<Utterance>, bool) {
    let mut t = vec![scripted_human_respond(task, detector, spec, &[])];
    let mut asked: Vec<&str> = Vec::new();
    let mut rejected: Vec<&str> = Vec::new();
    let mut liked: Option<&str> = None;
    while t.len() < MAX_IMAGINED_UTTERANCES {
        let unasked: Vec<&str> = task
            .categories
            .iter()
            .map(|c| c.name.as_str())
            .filter(|c| !asked.contains(c))
            .collect();
        let mut rec: Option<&CatalogItem> = None;
        let text = if !unasked.is_empty() && rng.gen::<f64>() < agent.ask {
            let c = *unasked.choose(rng).expect("non-empty");
            asked.push(c);
            phrase(&QUESTION_FORMS, c, rng)
        } else {
            let mut pool: Vec<&CatalogItem> = task.catalog.iter().filter(|i| !rejected.contains(&i.name.as_str())).collect();
            if pool.is_empty() {
                pool = task.catalog.iter().collect();
            }
            let inside: Vec<&CatalogItem> = pool.iter().copied().filter(|i| Some(i.category.as_str()) == liked).collect();
            let item = if !inside.is_empty() && rng.gen::<f64>() < agent.use_liked {
                *inside.choose(rng).expect("non-empty")
            } else {
                *pool.choose(rng).expect("non-empty")
            };
            rejected.push(&item.name);
            rec = Some(item);
            phrase(&RECOMMEND_FORMS, &item.name, rng)
        };
        t.push(Utterance::agent(text));
        if t.len() >= MAX_IMAGINED_UTTERANCES {
            break;
        }
        let reply = scripted_human_respond(task, detector, spec, &t);
        if reply.text.starts_with("Yes") {
            liked = asked.last().copied();
        }
        t.push(reply);
        if rec.is_some_and(|i| i.name.eq_ignore_ascii_case(&spec.ground_truth)) {
            return (t, true);
        }
    }
    (t, false)
}

/// Imagined catalog dialogue whose outcome matches `reward`.
pub fn imagine_catalog_dialogue(
    task: &TaskDescription,
    detector: &Detector,
    persona: &Persona,
    ground_truth: &str,
    reward: u8,
    agent: ImaginedAgent,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Utterance>> {
    task.item(ground_truth)?;
    for _ in 0..MAX_ROLLOUTS {
        let spec = SimHumanSpec::new(HumanKind::Scripted, ground_truth, persona.clone(), rng.gen());
        let (t, ok) = rollout(task, detector, &spec, agent, rng);
        if ok == (reward == 1) {
            return Some(t);
        }
    }
    None
}

fn teaching_dialogue(values: &BTreeMap<String, String>, reward: u8, rng: &mut ChaCha8Rng) -> String {
    let topic = values.get("topic").map_or("this idea", String::as_str);
    let persona = values.get("persona").map_or("learner", String::as_str);
    let probe = ["How much do you know about machine learning?", "Have you studied any AI before?"]
        .choose(rng)
        .expect("probe");
    let ending = if reward == 1 {
        "That makes sense now, thank you!"
    } else {
        "I am still confused, this did not help."
    };
    format!(
        "H: Can you explain {topic} to me?\nAI: Sure. {probe}\nH: I would call myself a {persona}.\n\
AI: Then think of {topic} as learning from examples of good behavior.\nH: {ending}"
    )
}

#[derive(Debug, Clone)]
pub struct MockWorld {
    pub task: TaskDescription,
    /// Completion returned for the reasoning prompt.
    pub personas_text: String,
    pub agent: ImaginedAgent,
}

impl MockWorld {
    pub fn new(task: TaskDescription, personas_text: Option<String>) -> Self {
        MockWorld {
            task,
            personas_text: personas_text.unwrap_or_else(|| DEFAULT_PERSONAS.to_string()),
            agent: ImaginedAgent::default(),
        }
    }

    pub fn backend(&self) -> MockBackend {
        let world = Arc::new(self.clone());
        let detector = Arc::new(Detector::new(&self.task, DetectionMode::Aliases));
        let mut mock = MockBackend::new();
        if let Ok(t) = self.task.template(REASONING) {
            let (t, w) = (t.clone(), world.clone());
            mock = mock.with_responder(move |p: &str, _: &mut ChaCha8Rng| {
                match_template(&t, p).map(|_| w.personas_text.clone())
            });
        }
        if let Ok(t) = self.task.template(IMAGINATION) {
            let (t, w, det) = (t.clone(), world.clone(), detector.clone());
            mock = mock.with_responder(move |p: &str, rng: &mut ChaCha8Rng| {
                let v = match_template(&t, p)?;
                w.imagine(&det, &v, rng)
            });
        }
        if let Ok(t) = self.task.template(CRITIQUE) {
            let t = t.clone();
            mock = mock.with_responder(move |p: &str, _: &mut ChaCha8Rng| {
                match_template(&t, p).and_then(|v| v.get("transcript").cloned())
            });
        }
        if let Ok(t) = self.task.template(HUMAN_TEMPLATE) {
            let (t, w, det) = (t.clone(), world, detector);
            mock = mock.with_responder(move |p: &str, rng: &mut ChaCha8Rng| {
                let v = match_template(&t, p)?;
                w.human_reply(&det, &v, rng)
            });
        }
        mock
    }

    fn persona_from(&self, values: &BTreeMap<String, String>) -> Persona {
        Persona::new(
            values.get("persona").map_or("customer", String::as_str),
            values.get("persona_description").map_or("", String::as_str),
        )
    }

    fn imagine(&self, detector: &Detector, values: &BTreeMap<String, String>, rng: &mut ChaCha8Rng) -> Option<String> {
        let reward = infer_reward(&self.task, values);
        let topic = values.get("topic")?;
        if self.task.catalog.is_empty() {
            return Some(teaching_dialogue(values, reward, rng));
        }
        let persona = self.persona_from(values);
        imagine_catalog_dialogue(&self.task, detector, &persona, topic, reward, self.agent, rng)
            .map(|t| render_utterances(&t))
    }

    fn human_reply(&self, detector: &Detector, values: &BTreeMap<String, String>, rng: &mut ChaCha8Rng) -> Option<String> {
        let transcript = values.get("transcript").map_or("", String::as_str);
        let utterances = if transcript.trim().is_empty() {
            Vec::new()
        } else {
            parse_transcript(transcript).ok()?
        };
        let topic = values.get("topic")?;
        if self.task.item(topic).is_none() {
            return Some(" I see. Could you tell me more?".to_string());
        }
        let spec = SimHumanSpec::new(HumanKind::Llm, topic, self.persona_from(values), rng.gen());
        let reply = scripted_human_respond(&self.task, detector, &spec, &utterances);
        Some(format!(" {}", reply.text))
    }
}
