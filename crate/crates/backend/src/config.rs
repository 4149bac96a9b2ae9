use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub auth_env: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_concurrent: usize,
    pub cache_dir: Option<PathBuf>,
    pub retry_backoff_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            endpoint: None,
            model: "mock".into(),
            auth_env: None,
            timeout_secs: 60.0,
            max_retries: 2,
            max_concurrent: 8,
            cache_dir: None,
            retry_backoff_ms: 250,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    pub fn http(endpoint: impl Into<String>, model: impl Into<String>, auth_env: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            endpoint: Some(endpoint.into()),
            model: model.into(),
            auth_env: Some(auth_env.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::Http {
            if self.endpoint.as_deref().is_none_or(str::is_empty) {
                return Err(BackendError::InvalidConfig("http backend needs an endpoint".into()));
            }
            if self.auth_env.as_deref().is_none_or(str::is_empty) {
                return Err(BackendError::InvalidConfig(
                    "http backend needs an auth environment variable name".into(),
                ));
            }
        }
        if !(self.timeout_secs > 0.0) {
            return Err(BackendError::InvalidConfig("timeout_secs must be positive".into()));
        }
        if self.max_concurrent == 0 {
            return Err(BackendError::InvalidConfig("max_concurrent must be >= 1".into()));
        }
        Ok(())
    }
}
