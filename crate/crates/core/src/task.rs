//! Task descriptions and prompt templates.
//!
//! A task bundle on disk is a directory holding `task.json` plus
//! `templates/<name>.txt` files. Templates use `{slot}` placeholders; `{{` and
//! `}}` produce literal braces.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const REASONING: &str = "reasoning";
pub const IMAGINATION: &str = "imagination";
pub const CRITIQUE: &str = "critique";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub slots: Vec<String>,
}

enum Piece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

fn pieces(text: &str) -> Result<Vec<Piece<'_>>> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let Some(i) = rest.find(['{', '}']) else {
            out.push(Piece::Literal(rest));
            break;
        };
        out.push(Piece::Literal(&rest[..i]));
        let tail = &rest[i..];
        if tail.starts_with("{{") {
            out.push(Piece::Literal("{"));
            rest = &tail[2..];
        } else if tail.starts_with("}}") {
            out.push(Piece::Literal("}"));
            rest = &tail[2..];
        } else if tail.starts_with('}') {
            return Err(CoreError::InvalidTask("unmatched '}' in template".into()));
        } else {
            let end = tail
                .find('}')
                .ok_or_else(|| CoreError::InvalidTask("unterminated '{' in template".into()))?;
            let name = &tail[1..end];
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(CoreError::InvalidTask(format!("bad placeholder {{{name}}}")));
            }
            out.push(Piece::Slot(name));
            rest = &tail[end + 1..];
        }
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        let slots = Self::placeholders_of(&text)?.into_iter().collect();
        Ok(PromptTemplate { text, slots })
    }

    fn placeholders_of(text: &str) -> Result<BTreeSet<String>> {
        Ok(pieces(text)?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Slot(s) => Some(s.to_string()),
                Piece::Literal(_) => None,
            })
            .collect())
    }

    pub fn placeholders(&self) -> Result<BTreeSet<String>> {
        Self::placeholders_of(&self.text)
    }

    /// The declared slots and the placeholders in the text must coincide.
    pub fn validate(&self) -> Result<()> {
        let found = self.placeholders()?;
        let declared: BTreeSet<String> = self.slots.iter().cloned().collect();
        if found != declared {
            let missing: Vec<_> = declared.difference(&found).collect();
            let undeclared: Vec<_> = found.difference(&declared).collect();
            return Err(CoreError::InvalidTask(format!(
                "template slots mismatch: declared but absent {missing:?}, present but undeclared {undeclared:?}"
            )));
        }
        Ok(())
    }

    pub fn render(&self, values: &BTreeMap<String, String>) -> Result<String> {
        let mut out = String::with_capacity(self.text.len() + 256);
        for p in pieces(&self.text)? {
            match p {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(name) => out.push_str(
                    values
                        .get(name)
                        .ok_or_else(|| CoreError::MissingSlot(name.to_string()))?,
                ),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub name: String,
    pub category: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

/// Slot values substituted into templates for each reward label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardSlots {
    #[serde(default)]
    pub success: BTreeMap<String, String>,
    #[serde(default)]
    pub failure: BTreeMap<String, String>,
}

impl RewardSlots {
    pub fn for_reward(&self, reward: u8) -> &BTreeMap<String, String> {
        if reward == 1 {
            &self.success
        } else {
            &self.failure
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescription {
    pub task_id: String,
    pub description: String,
    #[serde(default)]
    pub categories: Vec<Category>,
    #[serde(default)]
    pub catalog: Vec<CatalogItem>,
    /// Topics the imagination step draws from; when empty, catalog item names.
    #[serde(default)]
    pub topics: Vec<String>,
    #[serde(default)]
    pub criteria: Vec<String>,
    #[serde(default)]
    pub reward_slots: RewardSlots,
    #[serde(default)]
    pub templates: BTreeMap<String, PromptTemplate>,
    /// Optional first agent utterance for live sessions.
    #[serde(default)]
    pub greeting: Option<String>,
    /// Opening line used by simulated humans when they speak first.
    #[serde(default)]
    pub opening: Option<String>,
}

impl TaskDescription {
    pub fn validate(&self) -> Result<()> {
        if self.task_id.trim().is_empty() {
            return Err(CoreError::InvalidTask("empty task_id".into()));
        }
        for (name, t) in &self.templates {
            t.validate()
                .map_err(|e| CoreError::InvalidTask(format!("template {name}: {e}")))?;
        }
        for item in &self.catalog {
            if !self.categories.iter().any(|c| c.name == item.category) {
                return Err(CoreError::InvalidTask(format!(
                    "item {:?} has undeclared category {:?}",
                    item.name, item.category
                )));
            }
        }
        Ok(())
    }

    pub fn template(&self, name: &str) -> Result<&PromptTemplate> {
        self.templates
            .get(name)
            .ok_or_else(|| CoreError::InvalidTask(format!("task has no {name} template")))
    }

    pub fn topics(&self) -> Vec<String> {
        if self.topics.is_empty() {
            self.catalog.iter().map(|i| i.name.clone()).collect()
        } else {
            self.topics.clone()
        }
    }

    pub fn item(&self, name: &str) -> Option<&CatalogItem> {
        self.catalog.iter().find(|i| i.name.eq_ignore_ascii_case(name))
    }

    pub fn category(&self, name: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    /// Load `task.json`, filling empty template texts from `templates/<name>.txt`.
    pub fn load_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let raw = std::fs::read_to_string(dir.join("task.json"))?;
        let mut task: TaskDescription = serde_json::from_str(&raw)?;
        for (name, t) in task.templates.iter_mut() {
            if t.text.is_empty() {
                t.text = std::fs::read_to_string(dir.join("templates").join(format!("{name}.txt")))?;
            }
        }
        task.validate()?;
        Ok(task)
    }
}
