//! Corpus generation: imagination followed by critique passes, fanned out
//! through the backend's batch executor.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use imagine_backend::Backend;
use imagine_core::{Dialogue, TaskDescription};

use crate::critique::{critique_request, fallback, report_from_completion};
use crate::error::{EngineError, Result};
use crate::imagine::{dialogue_from_completion, imagination_request, ImaginationSpec, SamplingSettings};
use crate::persona::Persona;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub n: usize,
    pub success_ratio: f64,
    pub critique_rounds: usize,
    pub seed: u64,
    /// Imagination attempts per spec before it is skipped.
    pub max_attempts: usize,
    pub sampling: SamplingSettings,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            n: 100,
            success_ratio: 0.5,
            critique_rounds: 1,
            seed: 0,
            max_attempts: 2,
            sampling: SamplingSettings::default(),
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(EngineError::InvalidConfig("n must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.success_ratio) {
            return Err(EngineError::InvalidConfig(format!("success_ratio {} not in [0,1]", self.success_ratio)));
        }
        if self.max_attempts == 0 {
            return Err(EngineError::InvalidConfig("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedSpec {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    /// Successful dialogues in spec order.
    pub dialogues: Vec<Dialogue>,
    pub failed: Vec<FailedSpec>,
    pub critique_changed: usize,
    pub critique_fallbacks: usize,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Request seed for spec `index` at a given stage and attempt.
pub fn request_seed(seed: u64, index: usize, stage: u64, attempt: usize) -> u64 {
    splitmix(splitmix(splitmix(seed ^ stage.wrapping_mul(0x51_7cc1_b727_220a)) ^ index as u64) ^ attempt as u64)
}

/// Exactly `round(n·ratio)` success labels at shuffled positions.
pub fn assign_labels(n: usize, ratio: f64, seed: u64) -> Vec<u8> {
    let ones = ((n as f64) * ratio).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < ones)).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x1abe1)));
    labels
}

/// Persona×topic pairs, each epoch a fresh permutation of all pairs.
pub fn plan_specs(task: &TaskDescription, personas: &[Persona], cfg: &GenerateConfig) -> Result<Vec<ImaginationSpec>> {
    cfg.validate()?;
    if personas.is_empty() {
        return Err(EngineError::NoPersonas);
    }
    let topics: Vec<Option<String>> = match task.topics() {
        t if t.is_empty() => vec![None],
        t => t.into_iter().map(Some).collect(),
    };
    let pairs: Vec<(usize, usize)> = (0..personas.len())
        .flat_map(|p| (0..topics.len()).map(move |t| (p, t)))
        .collect();
    let labels = assign_labels(cfg.n, cfg.success_ratio, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ 0x9a1b5));
    let mut order = Vec::with_capacity(cfg.n + pairs.len());
    while order.len() < cfg.n {
        let mut epoch = pairs.clone();
        epoch.shuffle(&mut rng);
        order.extend(epoch);
    }
    Ok(order
        .into_iter()
        .zip(labels)
        .map(|((p, t), reward_flag)| ImaginationSpec {
            persona: personas[p].clone(),
            reward_flag,
            topic: topics[t].clone(),
        })
        .collect())
}

const IMAGINE_STAGE: u64 = 1;
const CRITIQUE_STAGE: u64 = 2;

pub fn generate_corpus(
    task: &TaskDescription,
    personas: &[Persona],
    cfg: &GenerateConfig,
    backend: &Backend,
) -> Result<CorpusReport> {
    let specs = plan_specs(task, personas, cfg)?;
    let n = specs.len();
    let mut slots: Vec<Option<Dialogue>> = vec![None; n];
    let mut errors: Vec<Option<String>> = vec![None; n];

    for attempt in 0..cfg.max_attempts {
        let pending: Vec<usize> = (0..n).filter(|&i| slots[i].is_none()).collect();
        if pending.is_empty() {
            break;
        }
        let reqs = pending
            .iter()
            .map(|&i| imagination_request(task, &specs[i], &cfg.sampling, request_seed(cfg.seed, i, IMAGINE_STAGE, attempt)))
            .collect::<Result<Vec<_>>>()?;
        for (&i, res) in pending.iter().zip(backend.complete_batch(&reqs)) {
            match res.map_err(EngineError::from).and_then(|r| dialogue_from_completion(task, &specs[i], &r.text)) {
                Ok(d) => slots[i] = Some(d),
                Err(e) => {
                    log::debug!("spec {i} attempt {attempt}: {e}");
                    errors[i] = Some(e.to_string());
                }
            }
        }
    }

    let mut critique_changed = 0;
    let mut critique_fallbacks = 0;
    for round in 0..cfg.critique_rounds {
        let live: Vec<usize> = (0..n).filter(|&i| slots[i].is_some()).collect();
        let reqs = live
            .iter()
            .map(|&i| {
                let d = slots[i].as_ref().expect("live slot");
                critique_request(task, personas, d, &cfg.sampling, request_seed(cfg.seed, i, CRITIQUE_STAGE, round))
            })
            .collect::<Result<Vec<_>>>()?;
        for (&i, res) in live.iter().zip(backend.complete_batch(&reqs)) {
            let d = slots[i].take().expect("live slot");
            let report = match res {
                Ok(r) => report_from_completion(task, &d, &r.text),
                Err(e) => fallback(task, &d, e.to_string()),
            };
            critique_changed += usize::from(report.changed);
            critique_fallbacks += usize::from(report.fallback_reason.is_some());
            slots[i] = Some(report.revised);
        }
    }

    let failed: Vec<FailedSpec> = (0..n)
        .filter(|&i| slots[i].is_none())
        .map(|i| FailedSpec {
            index: i,
            error: errors[i].clone().unwrap_or_default(),
        })
        .collect();
    let dialogues: Vec<Dialogue> = slots.into_iter().flatten().collect();
    if (dialogues.len() as f64) < 0.9 * n as f64 {
        return Err(EngineError::Shortfall {
            requested: n,
            produced: dialogues.len(),
            failed: failed.len(),
        });
    }
    if !failed.is_empty() {
        log::warn!("{} of {n} dialogues could not be generated", failed.len());
    }
    Ok(CorpusReport {
        dialogues,
        failed,
        critique_changed,
        critique_fallbacks,
    })
}
