//! Decodable policies and their on-disk checkpoints.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use imagine_core::{TokenId, Tokenizer, Vocab};

use crate::bc::BcLogRow;
use crate::config::TrainConfig;
use crate::error::{LearnError, Result};
use crate::heads::ValueHeads;
use crate::losses::softmax;
use crate::model::{BaseModel, SequenceModel};
use crate::rl::{RlLogRow, RlOutcome};

/// `base_logits + β·(q − v)`.
pub fn extract_policy_logits(base_logits: &[f64], q_values: &[f64], v_value: f64, beta: f64) -> Result<Vec<f64>> {
    if base_logits.len() != q_values.len() {
        return Err(LearnError::LengthMismatch(base_logits.len(), q_values.len()));
    }
    Ok(base_logits
        .iter()
        .zip(q_values)
        .map(|(b, q)| b + beta * (q - v_value))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Bc,
    Fbc,
    Rl,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PolicyKind::Bc => "bc",
            PolicyKind::Fbc => "fbc",
            PolicyKind::Rl => "rl",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: PolicyKind,
    pub task_id: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub corpus_hash: String,
    pub vocab_id: String,
    pub seed: u64,
    pub beta: f64,
    pub code_version: String,
    /// sha256 of params.bin.
    pub params_sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decoding {
    Greedy,
    Sample { temperature: f64 },
}

#[derive(Debug, Clone)]
pub struct PolicyArtifact {
    pub kind: PolicyKind,
    /// Behavior model whose logits the value shift is applied to.
    pub base: BaseModel,
    /// Separate trunk the heads read from; `base` when absent.
    pub value_base: Option<BaseModel>,
    pub heads: Option<ValueHeads>,
    pub beta: f64,
    pub vocab: Vocab,
    pub manifest: Manifest,
}

/// Architecture descriptions stored next to the parameter blob.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    base: BaseModel,
    #[serde(default)]
    value_base: Option<BaseModel>,
    heads: Option<ValueHeads>,
}

impl PolicyArtifact {
    pub fn new(
        kind: PolicyKind,
        base: BaseModel,
        heads: Option<ValueHeads>,
        beta: f64,
        vocab: Vocab,
        task_id: &str,
        cfg: &TrainConfig,
        corpus_hash: &str,
    ) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(LearnError::InvalidConfig(format!("beta must be >= 0, got {beta}")));
        }
        if base.vocab_size() != vocab.tokens().len() {
            return Err(LearnError::VocabMismatch {
                dataset: vocab.vocab_id(),
                model: format!("{} tokens", base.vocab_size()),
            });
        }
        let mut a = PolicyArtifact {
            kind,
            manifest: Manifest {
                kind,
                task_id: task_id.to_string(),
                config: cfg.clone(),
                config_hash: cfg.config_hash(),
                corpus_hash: corpus_hash.to_string(),
                vocab_id: vocab.vocab_id(),
                seed: cfg.seed,
                beta,
                code_version: env!("CARGO_PKG_VERSION").to_string(),
                params_sha256: String::new(),
            },
            base,
            value_base: None,
            heads,
            beta,
            vocab,
        };
        a.manifest.params_sha256 = hex::encode(Sha256::digest(a.params_blob()));
        Ok(a)
    }

    /// RL policy from a training run. `behavior` is the model the run started
    /// from; when the run fine-tuned its trunk, logits keep coming from
    /// `behavior` and the tuned trunk feeds the heads.
    pub fn from_rl(
        out: RlOutcome<BaseModel>,
        behavior: BaseModel,
        beta: f64,
        vocab: Vocab,
        task_id: &str,
        cfg: &TrainConfig,
        corpus_hash: &str,
    ) -> Result<Self> {
        if cfg.finetune_base {
            Self::new(PolicyKind::Rl, behavior, Some(out.heads), beta, vocab, task_id, cfg, corpus_hash)?
                .with_value_base(out.base)
        } else {
            Self::new(PolicyKind::Rl, out.base, Some(out.heads), beta, vocab, task_id, cfg, corpus_hash)
        }
    }

    /// Attach a separately trained trunk for the value heads.
    pub fn with_value_base(mut self, value_base: BaseModel) -> Result<Self> {
        if value_base.vocab_size() != self.base.vocab_size() {
            return Err(LearnError::VocabMismatch {
                dataset: format!("{} tokens", self.base.vocab_size()),
                model: format!("{} tokens", value_base.vocab_size()),
            });
        }
        if let Some(h) = &self.heads {
            if h.hidden_dim != value_base.hidden_dim() {
                return Err(LearnError::ShapeMismatch(value_base.hidden_dim(), h.hidden_dim));
            }
        }
        self.value_base = Some(value_base);
        self.manifest.params_sha256 = hex::encode(Sha256::digest(self.params_blob()));
        Ok(self)
    }

    /// Representation the value heads read at `state`.
    pub fn value_hidden(&self, state: &[TokenId]) -> Vec<f64> {
        self.value_base.as_ref().unwrap_or(&self.base).hidden(state)
    }

    pub fn id(&self) -> &str {
        &self.manifest.params_sha256
    }

    /// Next-token logits at `state`, including the value-based shift.
    pub fn step_logits(&self, state: &[TokenId]) -> Result<Vec<f64>> {
        let max = self.base.max_context();
        if state.len() > max {
            return Err(LearnError::ContextOverflow { len: state.len(), max });
        }
        let fwd = self.base.forward(state);
        match &self.heads {
            Some(h) if self.beta != 0.0 => {
                let hidden = match &self.value_base {
                    Some(vb) => vb.hidden(state),
                    None => fwd.hidden,
                };
                extract_policy_logits(&fwd.logits, &h.policy_q(&hidden), h.v_value(&hidden), self.beta)
            }
            _ => Ok(fwd.logits),
        }
    }

    /// Tokens the policy may emit: everything except the markers the
    /// environment writes.
    fn allowed(&self, id: usize) -> bool {
        let sp = self.vocab.specials();
        let id = id as TokenId;
        id != sp.unk && id != sp.agent_prefix && id != sp.human_prefix && id != sp.end_of_dialogue
    }

    /// Emit agent tokens from `state` until end-of-turn or `max_tokens`. The
    /// first token is never end-of-turn, so every reply has content.
    pub fn decode_reply<R: Rng + ?Sized>(
        &self,
        state: &[TokenId],
        decoding: Decoding,
        max_tokens: usize,
        rng: &mut R,
    ) -> Result<Vec<TokenId>> {
        let eot = self.vocab.specials().end_of_turn;
        let mut ctx = state.to_vec();
        let mut out = Vec::new();
        while out.len() < max_tokens {
            let logits = self.step_logits(&ctx)?;
            let first = out.is_empty();
            let allowed = |i: usize| self.allowed(i) && !(first && i == eot as usize);
            let tok = match decoding {
                Decoding::Greedy => argmax_allowed(&logits, allowed),
                Decoding::Sample { temperature } if temperature <= 0.0 => argmax_allowed(&logits, allowed),
                Decoding::Sample { temperature } => {
                    let scaled: Vec<f64> = logits
                        .iter()
                        .enumerate()
                        .map(|(i, z)| if allowed(i) { z / temperature } else { f64::NEG_INFINITY })
                        .collect();
                    let p = softmax(&scaled);
                    let mut u: f64 = rng.gen();
                    let mut pick = p.len() - 1;
                    for (i, pi) in p.iter().enumerate() {
                        if u < *pi {
                            pick = i;
                            break;
                        }
                        u -= pi;
                    }
                    pick
                }
            } as TokenId;
            out.push(tok);
            ctx.push(tok);
            if tok == eot {
                break;
            }
        }
        Ok(out)
    }

    /// Next-token distribution at `state`.
    pub fn distribution(&self, state: &[TokenId]) -> Result<Vec<f64>> {
        Ok(softmax(&self.step_logits(state)?))
    }

    fn params_blob(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put = |xs: &[f64]| {
            for x in xs {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        put(self.base.params());
        if let Some(vb) = &self.value_base {
            put(vb.params());
        }
        if let Some(h) = &self.heads {
            put(&h.params);
            put(&h.target);
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("params.bin"), self.params_blob())?;
        let model = ModelFile {
            base: self.base.clone(),
            value_base: self.value_base.clone(),
            heads: self.heads.clone(),
        };
        fs::write(dir.join("model.json"), serde_json::to_vec_pretty(&model)?)?;
        fs::write(dir.join("vocab.json"), serde_json::to_vec(&self.vocab)?)?;
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(())
    }

    /// Load and verify a checkpoint written by [`PolicyArtifact::save`].
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
        let blob = fs::read(dir.join("params.bin"))?;
        let digest = hex::encode(Sha256::digest(&blob));
        if digest != manifest.params_sha256 {
            return Err(LearnError::Checkpoint(format!(
                "params.bin hash {digest} does not match manifest {}",
                manifest.params_sha256
            )));
        }
        let vocab: Vocab = serde_json::from_slice(&fs::read(dir.join("vocab.json"))?)?;
        if vocab.vocab_id() != manifest.vocab_id {
            return Err(LearnError::Checkpoint("vocab.json does not match manifest".into()));
        }
        let model: ModelFile = serde_json::from_slice(&fs::read(dir.join("model.json"))?)?;
        if blob.len() % 8 != 0 {
            return Err(LearnError::Checkpoint("params.bin is not a whole number of f64".into()));
        }
        let floats: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let nb = model.base.param_len_hint();
        let nv = model.value_base.as_ref().map_or(0, BaseModel::param_len_hint);
        let need = nb + nv + model.heads.as_ref().map_or(0, |h| 2 * ValueHeads::param_len(h.hidden_dim, h.vocab_size, h.twin_q));
        if floats.len() != need {
            return Err(LearnError::Checkpoint(format!("expected {need} parameters, found {}", floats.len())));
        }
        let base = model
            .base
            .with_params(floats[..nb].to_vec())
            .ok_or_else(|| LearnError::Checkpoint("base parameter count".into()))?;
        let value_base = match model.value_base {
            Some(vb) => Some(
                vb.with_params(floats[nb..nb + nv].to_vec())
                    .ok_or_else(|| LearnError::Checkpoint("value trunk parameter count".into()))?,
            ),
            None => None,
        };
        let off = nb + nv;
        let heads = match model.heads {
            Some(h) => {
                let k = ValueHeads::param_len(h.hidden_dim, h.vocab_size, h.twin_q);
                Some(h.with_params(floats[off..off + k].to_vec(), floats[off + k..].to_vec())?)
            }
            None => None,
        };
        Ok(PolicyArtifact {
            kind: manifest.kind,
            beta: manifest.beta,
            base,
            value_base,
            heads,
            vocab,
            manifest,
        })
    }
}

fn argmax_allowed(z: &[f64], allowed: impl Fn(usize) -> bool) -> usize {
    let mut best = None;
    for (i, &x) in z.iter().enumerate() {
        if allowed(i) && best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map_or(0, |(i, _)| i)
}

pub fn write_bc_log(path: impl AsRef<Path>, log: &[BcLogRow]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "step,loss,grad_norm")?;
    for r in log {
        writeln!(f, "{},{},{}", r.step, r.loss, r.grad_norm)?;
    }
    Ok(())
}

pub fn write_rl_log(path: impl AsRef<Path>, log: &[RlLogRow]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "step,q_loss,v_loss,grad_norm")?;
    for r in log {
        writeln!(f, "{},{},{},{}", r.step, r.q_loss, r.v_loss, r.grad_norm)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_token_extraction() {
        let z = extract_policy_logits(&[0.0, 0.0], &[1.0, 0.0], 0.0, 1.0).unwrap();
        let p = softmax(&z);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!(extract_policy_logits(&[0.0], &[1.0, 2.0], 0.0, 1.0).is_err());
    }
}
