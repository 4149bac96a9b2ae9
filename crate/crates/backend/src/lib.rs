//! Uniform text-completion interface.
//!
//! [`Backend`] wraps either a remote completions endpoint or a [`MockBackend`]
//! and adds response caching, bounded retries and a bounded-concurrency batch
//! executor. Everything upstream (persona synthesis, dialogue imagination,
//! LLM-simulated humans) talks to this type only.

mod cache;
mod config;
mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{BackendConfig, BackendKind};
pub use mock::{FaultPlan, MockBackend, Responder};

use cache::Cache;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            max_tokens: 1024,
            temperature: 1.0,
            stop: Vec::new(),
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn with_stop(mut self, stop: impl Into<String>) -> Self {
        self.stop.push(stop.into());
        self
    }

    /// Stable id derived from the request contents; used in errors and logs.
    pub fn request_id(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("request serializes"));
        format!("req-{}", hex::encode(&digest[..6]))
    }

    fn validate(&self) -> Result<(), BackendError> {
        if self.max_tokens < 1 || !(self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest {
                request_id: self.request_id(),
                reason: "max_tokens must be >= 1 and temperature >= 0".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub backend_id: String,
    pub usage: Usage,
    pub cached: bool,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("{request_id}: backend unavailable after {attempts} attempt(s): {reason}")]
    BackendUnavailable {
        request_id: String,
        attempts: u32,
        reason: String,
    },
    #[error("{request_id}: credential variable {var} is not set")]
    AuthMissing { request_id: String, var: String },
    #[error("{request_id}: timed out after {attempts} attempt(s)")]
    TimeoutExceeded { request_id: String, attempts: u32 },
    #[error("{request_id}: invalid request: {reason}")]
    InvalidRequest { request_id: String, reason: String },
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
}

impl BackendError {
    pub fn request_id(&self) -> Option<&str> {
        match self {
            BackendError::BackendUnavailable { request_id, .. }
            | BackendError::AuthMissing { request_id, .. }
            | BackendError::TimeoutExceeded { request_id, .. }
            | BackendError::InvalidRequest { request_id, .. } => Some(request_id),
            BackendError::InvalidConfig(_) => None,
        }
    }
}

/// Outcome of a single transport attempt.
pub(crate) enum AttemptError {
    Retryable(String),
    Timeout,
    Fatal(BackendError),
}

pub(crate) struct RawCompletion {
    pub text: String,
    pub usage: Usage,
}

enum Transport {
    Http(http::HttpTransport),
    Mock(MockBackend),
}

pub struct Backend {
    cfg: BackendConfig,
    transport: Transport,
    cache: Option<Cache>,
    attempts: AtomicUsize,
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backend").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Backend {
    /// HTTP backend built from `cfg` (which must have `kind = http`).
    pub fn http(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        if cfg.kind != BackendKind::Http {
            return Err(BackendError::InvalidConfig("expected kind = http".into()));
        }
        let transport = Transport::Http(http::HttpTransport::new(&cfg)?);
        Self::assemble(cfg, transport)
    }

    pub fn mock(cfg: BackendConfig, mock: MockBackend) -> Result<Self, BackendError> {
        cfg.validate()?;
        if cfg.kind != BackendKind::Mock {
            return Err(BackendError::InvalidConfig("expected kind = mock".into()));
        }
        Self::assemble(cfg, Transport::Mock(mock))
    }

    fn assemble(cfg: BackendConfig, transport: Transport) -> Result<Self, BackendError> {
        let cache = match &cfg.cache_dir {
            Some(dir) => Some(Cache::open(dir).map_err(|e| {
                BackendError::InvalidConfig(format!("cache dir {}: {e}", dir.display()))
            })?),
            None => None,
        };
        Ok(Backend {
            cfg,
            transport,
            cache,
            attempts: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn backend_id(&self) -> String {
        match self.cfg.kind {
            BackendKind::Http => format!("http:{}", self.cfg.model),
            BackendKind::Mock => format!("mock:{}", self.cfg.model),
        }
    }

    /// Total transport attempts issued so far (cache hits excluded).
    pub fn attempts_made(&self) -> usize {
        self.attempts.load(Ordering::Relaxed)
    }

    pub fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        req.validate()?;
        let key = self.cache.as_ref().map(|_| cache::key(req, &self.cfg.model));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            let lock = cache.key_lock(key);
            let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());
            if let Some(mut hit) = cache.get(key) {
                hit.cached = true;
                return Ok(hit);
            }
            let result = self.complete_uncached(req)?;
            if let Err(e) = cache.put(key, &result) {
                log::warn!("{}: failed to write cache entry: {e}", req.request_id());
            }
            return Ok(result);
        }
        self.complete_uncached(req)
    }

    fn complete_uncached(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let request_id = req.request_id();
        let max_attempts = self.cfg.max_retries + 1;
        let mut last = AttemptError::Retryable("no attempt made".into());
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                let backoff = self.cfg.retry_backoff_ms.saturating_mul(1 << (attempt - 2).min(6));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            self.attempts.fetch_add(1, Ordering::Relaxed);
            let outcome = match &self.transport {
                Transport::Http(h) => h.attempt(req, &request_id, &self.cfg),
                Transport::Mock(m) => m.attempt(req, attempt),
            };
            match outcome {
                Ok(raw) => {
                    return Ok(CompletionResult {
                        text: apply_stops(&raw.text, &req.stop),
                        backend_id: self.backend_id(),
                        usage: raw.usage,
                        cached: false,
                    })
                }
                Err(AttemptError::Fatal(e)) => return Err(e),
                Err(e) => {
                    if let AttemptError::Retryable(reason) = &e {
                        log::debug!("{request_id}: attempt {attempt} failed: {reason}");
                    }
                    last = e;
                }
            }
        }
        Err(match last {
            AttemptError::Timeout => BackendError::TimeoutExceeded {
                request_id,
                attempts: max_attempts,
            },
            AttemptError::Retryable(reason) => BackendError::BackendUnavailable {
                request_id,
                attempts: max_attempts,
                reason,
            },
            AttemptError::Fatal(e) => e,
        })
    }

    /// Results are positionally aligned with `reqs`; at most
    /// `max_concurrent` requests are in flight at once.
    pub fn complete_batch(
        &self,
        reqs: &[CompletionRequest],
    ) -> Vec<Result<CompletionResult, BackendError>> {
        let n = reqs.len();
        let workers = self.cfg.max_concurrent.max(1).min(n);
        let next = AtomicUsize::new(0);
        let slots: Mutex<Vec<Option<Result<CompletionResult, BackendError>>>> =
            Mutex::new((0..n).map(|_| None).collect());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = self.complete(&reqs[i]);
                    slots.lock().expect("slot lock")[i] = Some(r);
                });
            }
        });
        slots
            .into_inner()
            .expect("slot lock")
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    }
}

/// Truncate at the earliest occurrence of any stop sequence.
pub fn apply_stops(text: &str, stops: &[String]) -> String {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}
