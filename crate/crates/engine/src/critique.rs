//! Critique step: revise a dialogue against the task's criteria.

use serde::{Deserialize, Serialize};

use imagine_backend::{Backend, CompletionRequest};
use imagine_core::task::CRITIQUE;
use imagine_core::{parse_transcript, render_dialogue, Dialogue, PromptTemplate, Provenance, Speaker, TaskDescription};

use crate::error::{EngineError, Result};
use crate::imagine::{persona_values, SamplingSettings};
use crate::persona::Persona;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueReport {
    pub original: Dialogue,
    pub revised: Dialogue,
    pub criteria_applied: Vec<String>,
    pub changed: bool,
    /// Set when the revision was unusable and `revised` is the original.
    pub fallback_reason: Option<String>,
}

fn persona_for(personas: &[Persona], id: &str) -> Persona {
    personas
        .iter()
        .find(|p| p.persona_id == id)
        .cloned()
        .unwrap_or_else(|| Persona {
            persona_id: id.to_string(),
            name: id.replace('-', " "),
            description: String::new(),
        })
}

pub fn critique_prompt(task: &TaskDescription, personas: &[Persona], d: &Dialogue) -> Result<String> {
    if task.criteria.is_empty() {
        return Err(EngineError::InvalidConfig("task declares no critique criteria".into()));
    }
    let mut v = persona_values(task, &persona_for(personas, &d.persona_id), d.reward);
    v.insert("transcript".into(), render_dialogue(d).trim_end().to_string());
    // Criteria may reference reward slots such as {sentiment}.
    let criteria = task
        .criteria
        .iter()
        .enumerate()
        .map(|(i, c)| Ok(format!("({}) {}", i + 1, PromptTemplate::new(c.as_str())?.render(&v)?)))
        .collect::<Result<Vec<String>>>()?;
    v.insert("criteria".into(), criteria.join("\n"));
    Ok(task.template(CRITIQUE)?.render(&v)?)
}

pub fn critique_request(
    task: &TaskDescription,
    personas: &[Persona],
    d: &Dialogue,
    settings: &SamplingSettings,
    seed: u64,
) -> Result<CompletionRequest> {
    Ok(CompletionRequest::new(critique_prompt(task, personas, d)?)
        .with_seed(seed)
        .with_temperature(settings.critique_temperature)
        .with_max_tokens(settings.max_tokens))
}

/// Build the report for a revision text. An unusable revision falls back to
/// the original with `changed = false`.
pub fn report_from_completion(task: &TaskDescription, d: &Dialogue, text: &str) -> CritiqueReport {
    let parsed = parse_transcript(text).map_err(EngineError::from).and_then(|utterances| {
        let has = |s: Speaker| utterances.iter().any(|u| u.speaker == s);
        if !(has(Speaker::Agent) && has(Speaker::Human)) {
            return Err(EngineError::EmptyDialogue);
        }
        let revised = Dialogue {
            utterances,
            provenance: Provenance::Critiqued,
            ..d.clone()
        };
        revised.validate()?;
        Ok(revised)
    });
    match parsed {
        Ok(revised) => CritiqueReport {
            changed: render_dialogue(&revised) != render_dialogue(d),
            original: d.clone(),
            revised,
            criteria_applied: task.criteria.clone(),
            fallback_reason: None,
        },
        Err(e) => fallback(task, d, e.to_string()),
    }
}

pub fn fallback(task: &TaskDescription, d: &Dialogue, reason: String) -> CritiqueReport {
    log::warn!("critique fallback for persona {}: {reason}", d.persona_id);
    CritiqueReport {
        original: d.clone(),
        revised: d.clone(),
        criteria_applied: task.criteria.clone(),
        changed: false,
        fallback_reason: Some(reason),
    }
}

pub fn critique_dialogue(
    task: &TaskDescription,
    personas: &[Persona],
    d: &Dialogue,
    backend: &Backend,
    settings: &SamplingSettings,
    seed: u64,
) -> Result<CritiqueReport> {
    let res = backend.complete(&critique_request(task, personas, d, settings, seed)?)?;
    Ok(report_from_completion(task, d, &res.text))
}
