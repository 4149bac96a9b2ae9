//! Reasoning step: persona lists from a task description.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use imagine_backend::{Backend, CompletionRequest};
use imagine_core::task::REASONING;
use imagine_core::TaskDescription;

use crate::error::{EngineError, Result};

pub const PERSONAS_FILE: &str = "personas.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Persona {
    pub persona_id: String,
    pub name: String,
    pub description: String,
}

impl Persona {
    pub fn new(name: &str, description: &str) -> Self {
        Persona {
            persona_id: slug(name),
            name: name.trim().to_string(),
            description: description.trim().to_string(),
        }
    }
}

pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.trim().chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

fn entry_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*(?:\(\d+\)|\d+[.)]|[-*•])\s+(?:\*\*)?([^:*\n]+?)(?:\*\*)?\s*:\s*(\S.*?)\s*$")
            .expect("persona regex")
    })
}

/// Parse `(1) name: description` style lines (also `1.`, `1)` and bullets).
/// Later entries whose name matches an earlier one case-insensitively are
/// dropped.
pub fn parse_personas(text: &str) -> Result<Vec<Persona>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in text.lines() {
        let Some(c) = entry_re().captures(line) else {
            continue;
        };
        let name = c[1].trim();
        if name.is_empty() || !seen.insert(name.to_lowercase()) {
            continue;
        }
        out.push(Persona::new(name, &c[2]));
    }
    if out.is_empty() {
        return Err(EngineError::UnparseablePersonaList);
    }
    Ok(out)
}

pub fn reasoning_prompt(task: &TaskDescription) -> Result<String> {
    let values = BTreeMap::from([("task_description".to_string(), task.description.clone())]);
    Ok(task.template(REASONING)?.render(&values)?)
}

pub fn synthesize_personas(task: &TaskDescription, backend: &Backend, seed: u64) -> Result<Vec<Persona>> {
    let req = CompletionRequest::new(reasoning_prompt(task)?).with_seed(seed);
    let res = backend.complete(&req)?;
    parse_personas(&res.text)
}

pub fn read_personas(path: impl AsRef<Path>) -> Result<Vec<Persona>> {
    let personas: Vec<Persona> = serde_json::from_slice(&std::fs::read(path)?)?;
    if personas.is_empty() {
        return Err(EngineError::NoPersonas);
    }
    Ok(personas)
}

pub fn write_personas(path: impl AsRef<Path>, personas: &[Persona]) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(personas)?)?;
    Ok(())
}

/// Personas cached in the bundle, synthesizing and caching them if absent.
pub fn bundle_personas(dir: impl AsRef<Path>, task: &TaskDescription, backend: &Backend, seed: u64) -> Result<Vec<Persona>> {
    let path = dir.as_ref().join(PERSONAS_FILE);
    if path.exists() {
        return read_personas(&path);
    }
    let personas = synthesize_personas(task, backend, seed)?;
    write_personas(&path, &personas)?;
    Ok(personas)
}
