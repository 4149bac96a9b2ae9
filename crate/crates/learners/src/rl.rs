//! Offline value learning over a transition dataset.

use std::collections::HashMap;

use imagine_core::{TokenId, TransitionDataset};

use crate::bc::Batcher;
use crate::config::TrainConfig;
use crate::error::{LearnError, Result};
use crate::heads::ValueHeads;
use crate::losses::{loss_and_grad, HiddenTransition};
use crate::model::SequenceModel;
use crate::optim::AdamW;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlLogRow {
    pub step: usize,
    pub q_loss: f64,
    pub v_loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct RlOutcome<M> {
    pub base: M,
    pub heads: ValueHeads,
    pub log: Vec<RlLogRow>,
}

/// Hidden vectors for every distinct state in the dataset, shared between
/// transitions whose `next_state` is another transition's `state`.
struct StateCache {
    hidden: Vec<Vec<f64>>,
    /// (state, next_state) row per transition.
    rows: Vec<(usize, usize)>,
}

impl StateCache {
    fn build<'a, M: SequenceModel + ?Sized>(model: &M, ds: &'a TransitionDataset) -> Self {
        let mut index: HashMap<&[TokenId], usize> = HashMap::new();
        let mut hidden = Vec::new();
        let mut rows = Vec::with_capacity(ds.len());
        for t in &ds.transitions {
            let mut row = |s: &'a [TokenId]| {
                *index.entry(s).or_insert_with(|| {
                    hidden.push(model.hidden(s));
                    hidden.len() - 1
                })
            };
            let a = row(&t.state);
            let b = row(&t.next_state);
            rows.push((a, b));
        }
        StateCache { hidden, rows }
    }
}

fn check_inputs<M: SequenceModel + ?Sized>(ds: &TransitionDataset, base: &M, vocab_id: &str) -> Result<()> {
    if ds.vocab_id != vocab_id {
        return Err(LearnError::VocabMismatch {
            dataset: ds.vocab_id.clone(),
            model: vocab_id.to_string(),
        });
    }
    if ds.is_empty() {
        return Err(LearnError::EmptyCorpus);
    }
    let v = base.vocab_size();
    if let Some(t) = ds.transitions.iter().find(|t| t.action as usize >= v) {
        return Err(LearnError::VocabMismatch {
            dataset: format!("action id {}", t.action),
            model: format!("{v} tokens"),
        });
    }
    let max = base.max_context();
    if let Some(t) = ds.transitions.iter().find(|t| t.next_state.len() > max) {
        return Err(LearnError::ContextOverflow {
            len: t.next_state.len(),
            max,
        });
    }
    Ok(())
}

/// Fit Q and V heads on `base`'s hidden representation. Each step minimizes
/// the sum of the Q and V losses on one minibatch, then Polyak-averages the
/// targets. `vocab_id` identifies the vocabulary `base` was built for.
pub fn train_rl<M: SequenceModel>(
    ds: &TransitionDataset,
    base: M,
    vocab_id: &str,
    cfg: &TrainConfig,
) -> Result<RlOutcome<M>> {
    let heads = ValueHeads::new(base.hidden_dim(), base.vocab_size(), cfg.twin_q, cfg.seed);
    train_rl_from(ds, base, heads, vocab_id, cfg)
}

/// As [`train_rl`], starting from the given heads.
pub fn train_rl_from<M: SequenceModel>(
    ds: &TransitionDataset,
    mut base: M,
    mut heads: ValueHeads,
    vocab_id: &str,
    cfg: &TrainConfig,
) -> Result<RlOutcome<M>> {
    cfg.validate()?;
    check_inputs(ds, &base, vocab_id)?;
    if heads.hidden_dim != base.hidden_dim() || heads.vocab_size != base.vocab_size() {
        return Err(LearnError::ShapeMismatch(base.hidden_dim(), heads.hidden_dim));
    }
    let cache = (!cfg.finetune_base).then(|| StateCache::build(&base, ds));
    let mut head_opt = AdamW::new(heads.params.len(), cfg.learning_rate, cfg.weight_decay);
    let mut base_opt = cfg
        .finetune_base
        .then(|| AdamW::new(base.params().len(), cfg.learning_rate, cfg.weight_decay));
    let mut batcher = Batcher::new(ds.len(), cfg.batch_size, cfg.seed);
    let mut grads = vec![0.0; heads.params.len()];
    let mut base_grads = vec![0.0; if cfg.finetune_base { base.params().len() } else { 0 }];
    let mut log = Vec::with_capacity(cfg.total_steps());

    for step in 0..cfg.total_steps() {
        let batch = batcher.next_batch();
        grads.iter_mut().for_each(|g| *g = 0.0);
        let parts = match &cache {
            Some(c) => {
                let ht: Vec<HiddenTransition> = batch
                    .iter()
                    .map(|&i| {
                        let t = &ds.transitions[i];
                        let (a, b) = c.rows[i];
                        HiddenTransition {
                            h: &c.hidden[a],
                            h_next: &c.hidden[b],
                            action: t.action as usize,
                            reward: t.reward,
                            done: t.done,
                        }
                    })
                    .collect();
                loss_and_grad(&heads, &ht, cfg, Some(&mut grads), None)
            }
            None => {
                let fwds: Vec<_> = batch.iter().map(|&i| base.forward(&ds.transitions[i].state)).collect();
                let nexts: Vec<_> = batch.iter().map(|&i| base.hidden(&ds.transitions[i].next_state)).collect();
                let ht: Vec<HiddenTransition> = batch
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| {
                        let t = &ds.transitions[i];
                        HiddenTransition {
                            h: &fwds[k].hidden,
                            h_next: &nexts[k],
                            action: t.action as usize,
                            reward: t.reward,
                            done: t.done,
                        }
                    })
                    .collect();
                let mut dh = vec![vec![0.0; base.hidden_dim()]; batch.len()];
                let parts = loss_and_grad(&heads, &ht, cfg, Some(&mut grads), Some(&mut dh));
                base_grads.iter_mut().for_each(|g| *g = 0.0);
                for (fwd, d) in fwds.iter().zip(&dh) {
                    base.backward(fwd, None, Some(d), &mut base_grads);
                }
                parts
            }
        };
        if !(parts.q_loss.is_finite() && parts.v_loss.is_finite()) {
            return Err(LearnError::NonFiniteLoss {
                step,
                q_loss: parts.q_loss,
                v_loss: parts.v_loss,
            });
        }
        let mut sq: f64 = grads.iter().map(|g| g * g).sum();
        head_opt.step(&mut heads.params, &grads);
        if let Some(opt) = base_opt.as_mut() {
            sq += base_grads.iter().map(|g| g * g).sum::<f64>();
            opt.step(base.params_mut(), &base_grads);
        }
        heads.update_targets(cfg.polyak)?;
        log.push(RlLogRow {
            step,
            q_loss: parts.q_loss,
            v_loss: parts.v_loss,
            grad_norm: sq.sqrt(),
        });
    }
    Ok(RlOutcome { base, heads, log })
}
