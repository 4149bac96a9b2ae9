//! Deterministic offline backend: a prompt→text fixture map plus optional
//! generator callbacks, with optional fault injection.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::{AttemptError, BackendError, CompletionRequest, RawCompletion, Usage};

/// Generates a completion for prompts it recognizes. The RNG is seeded from
/// the prompt and the request seed, so output is replayable.
pub trait Responder: Send + Sync {
    fn respond(&self, prompt: &str, rng: &mut ChaCha8Rng) -> Option<String>;
}

impl<F> Responder for F
where
    F: Fn(&str, &mut ChaCha8Rng) -> Option<String> + Send + Sync,
{
    fn respond(&self, prompt: &str, rng: &mut ChaCha8Rng) -> Option<String> {
        self(prompt, rng)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub enum FaultPlan {
    #[default]
    None,
    /// A fixed pseudo-random fraction of requests fail on every attempt.
    FailRate { rate: f64, salt: u64 },
    /// Every request fails its first `n` attempts, then succeeds.
    Transient(u32),
    /// Every attempt times out.
    Timeout,
}

#[derive(Clone, Default)]
pub struct MockBackend {
    fixtures: HashMap<String, String>,
    responders: Vec<Arc<dyn Responder>>,
    faults: FaultPlan,
}

fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_fixture(mut self, prompt: impl Into<String>, text: impl Into<String>) -> Self {
        self.fixtures.insert(prompt.into(), text.into());
        self
    }

    pub fn with_fixtures(mut self, fixtures: impl IntoIterator<Item = (String, String)>) -> Self {
        self.fixtures.extend(fixtures);
        self
    }

    pub fn with_responder(mut self, r: impl Responder + 'static) -> Self {
        self.responders.push(Arc::new(r));
        self
    }

    pub fn with_faults(mut self, faults: FaultPlan) -> Self {
        self.faults = faults;
        self
    }

    fn request_seed(req: &CompletionRequest) -> u64 {
        hash64(&[req.prompt.as_bytes(), &req.seed.unwrap_or(0).to_le_bytes()])
    }

    pub(crate) fn attempt(&self, req: &CompletionRequest, attempt: u32) -> Result<RawCompletion, AttemptError> {
        match self.faults {
            FaultPlan::None => {}
            FaultPlan::FailRate { rate, salt } => {
                let h = hash64(&[req.prompt.as_bytes(), &req.seed.unwrap_or(0).to_le_bytes(), &salt.to_le_bytes()]);
                if (h as f64 / u64::MAX as f64) < rate {
                    return Err(AttemptError::Retryable("injected failure".into()));
                }
            }
            FaultPlan::Transient(n) => {
                if attempt <= n {
                    return Err(AttemptError::Retryable(format!("injected transient failure {attempt}")));
                }
            }
            FaultPlan::Timeout => return Err(AttemptError::Timeout),
        }
        let text = match self.fixtures.get(&req.prompt) {
            Some(t) => t.clone(),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(Self::request_seed(req));
                self.responders
                    .iter()
                    .find_map(|r| r.respond(&req.prompt, &mut rng))
                    .ok_or_else(|| {
                        AttemptError::Fatal(BackendError::BackendUnavailable {
                            request_id: req.request_id(),
                            attempts: attempt,
                            reason: "mock has no fixture or responder for this prompt".into(),
                        })
                    })?
            }
        };
        let text = truncate_words(&text, req.max_tokens as usize);
        Ok(RawCompletion {
            usage: Usage {
                prompt_tokens: req.prompt.split_whitespace().count() as u64,
                completion_tokens: text.split_whitespace().count() as u64,
            },
            text,
        })
    }
}

/// Keep at most `max` whitespace-separated words, preserving the original
/// spacing of what is kept.
fn truncate_words(text: &str, max: usize) -> String {
    let mut seen = 0;
    let mut in_word = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_word = false;
        } else if !in_word {
            in_word = true;
            seen += 1;
            if seen > max {
                return text[..i].trim_end().to_string();
            }
        }
    }
    text.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_counts_words() {
        assert_eq!(truncate_words("a b\nc d", 3), "a b\nc");
        assert_eq!(truncate_words("a b", 5), "a b");
    }
}
