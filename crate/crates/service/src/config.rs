//! File configuration shared by the CLI subcommands. Files are JSON, or
//! `key = value` lines with dotted keys for nested fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use imagine_backend::BackendConfig;
use imagine_engine::GenerateConfig;
use imagine_learners::TrainConfig;
use imagine_sim::EvalConfig;

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub backend: BackendConfig,
    pub generate: GenerateConfig,
    /// Offline RL schedule.
    pub train: TrainConfig,
    /// Schedule for the behavior-cloning models.
    pub bc: TrainConfig,
    /// Extraction coefficient for RL policies.
    pub beta: f64,
    pub hidden_dim: usize,
    pub eval: EvalConfig,
    pub serve: ServeConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            backend: BackendConfig::mock(),
            generate: GenerateConfig::default(),
            train: TrainConfig::default(),
            bc: TrainConfig::default(),
            beta: 1.0,
            hidden_dim: 768,
            eval: EvalConfig::default(),
            serve: ServeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    pub registry: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    /// Sampling temperature for live replies; 0 decodes greedily.
    pub temperature: f64,
    pub max_reply_tokens: usize,
    /// Session length limit in model tokens, reply budget included. The
    /// policy's own context window caps it further.
    pub max_context_tokens: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            port: 8080,
            data_dir: PathBuf::from("data"),
            registry: None,
            static_dir: None,
            temperature: 0.7,
            max_reply_tokens: 48,
            max_context_tokens: 1024,
        }
    }
}

fn parse_scalar(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn insert_dotted(root: &mut Map<String, Value>, key: &str, value: Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut node = root;
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(ServiceError::Config(format!("bad key {key:?}")));
        }
        if parts.peek().is_none() {
            node.insert(part.to_string(), value);
            return Ok(());
        }
        let next = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        node = next
            .as_object_mut()
            .ok_or_else(|| ServiceError::Config(format!("{key:?} nests under a scalar")))?;
    }
    Ok(())
}

/// `key = value` lines into a JSON object. Blank lines and `#` comments are
/// skipped; values are read as JSON when they parse, else as strings.
pub fn parse_key_values(text: &str) -> Result<Value> {
    let mut root = Map::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ServiceError::Config(format!("line {}: expected key = value", n + 1)))?;
        insert_dotted(&mut root, k.trim(), parse_scalar(v))?;
    }
    Ok(Value::Object(root))
}

impl PipelineConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let value = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?
        } else {
            parse_key_values(text)?
        };
        serde_json::from_value(value).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}
