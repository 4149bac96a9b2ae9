//! Imagination step: one conditioned dialogue per request.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use imagine_backend::{Backend, CompletionRequest};
use imagine_core::task::IMAGINATION;
use imagine_core::{parse_transcript, Dialogue, Provenance, Speaker, TaskDescription};

use crate::error::{EngineError, Result};
use crate::persona::Persona;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSettings {
    pub imagine_temperature: f64,
    pub critique_temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        SamplingSettings {
            imagine_temperature: 1.0,
            critique_temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImaginationSpec {
    pub persona: Persona,
    pub reward_flag: u8,
    pub topic: Option<String>,
}

impl ImaginationSpec {
    pub fn validate(&self, task: &TaskDescription) -> Result<()> {
        if self.reward_flag > 1 {
            return Err(EngineError::InvalidConfig(format!("reward flag {} not in {{0,1}}", self.reward_flag)));
        }
        if let Some(t) = &self.topic {
            let topics = task.topics();
            if !topics.is_empty() && !topics.iter().any(|x| x.eq_ignore_ascii_case(t)) {
                return Err(EngineError::InvalidConfig(format!("topic {t:?} is not declared by the task")));
            }
        }
        Ok(())
    }
}

/// Slot values shared by the imagination and critique templates.
pub fn persona_values(task: &TaskDescription, persona: &Persona, reward: u8) -> BTreeMap<String, String> {
    let mut v = BTreeMap::new();
    v.insert("task_description".into(), task.description.clone());
    v.insert("persona".into(), persona.name.clone());
    v.insert("persona_description".into(), persona.description.clone());
    v.extend(task.reward_slots.for_reward(reward).clone());
    v
}

pub fn imagination_values(task: &TaskDescription, spec: &ImaginationSpec) -> BTreeMap<String, String> {
    let mut v = persona_values(task, &spec.persona, spec.reward_flag);
    let topic = spec.topic.clone().unwrap_or_default();
    let category = task.item(&topic).map_or_else(|| topic.clone(), |i| i.category.clone());
    v.insert("topic".into(), topic);
    v.insert("category".into(), category);
    v
}

pub fn imagination_prompt(task: &TaskDescription, spec: &ImaginationSpec) -> Result<String> {
    spec.validate(task)?;
    Ok(task.template(IMAGINATION)?.render(&imagination_values(task, spec))?)
}

/// Turn a completion into a dialogue carrying the spec's persona and label.
pub fn dialogue_from_completion(task: &TaskDescription, spec: &ImaginationSpec, text: &str) -> Result<Dialogue> {
    let utterances = parse_transcript(text)?;
    let has = |s: Speaker| utterances.iter().any(|u| u.speaker == s);
    if !(has(Speaker::Agent) && has(Speaker::Human)) {
        return Err(EngineError::EmptyDialogue);
    }
    let d = Dialogue {
        task_id: task.task_id.clone(),
        persona_id: spec.persona.persona_id.clone(),
        reward: spec.reward_flag,
        provenance: Provenance::Imagined,
        utterances,
    };
    d.validate()?;
    Ok(d)
}

pub fn imagination_request(
    task: &TaskDescription,
    spec: &ImaginationSpec,
    settings: &SamplingSettings,
    seed: u64,
) -> Result<CompletionRequest> {
    Ok(CompletionRequest::new(imagination_prompt(task, spec)?)
        .with_seed(seed)
        .with_temperature(settings.imagine_temperature)
        .with_max_tokens(settings.max_tokens))
}

pub fn imagine_dialogue(
    task: &TaskDescription,
    spec: &ImaginationSpec,
    backend: &Backend,
    settings: &SamplingSettings,
    seed: u64,
) -> Result<Dialogue> {
    let res = backend.complete(&imagination_request(task, spec, settings, seed)?)?;
    dialogue_from_completion(task, spec, &res.text)
}
