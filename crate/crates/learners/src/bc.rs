//! Behavior cloning on agent tokens, and its filtered variant.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use imagine_core::{dialogue_stream, Dialogue, TokenId, Vocab};

use crate::config::TrainConfig;
use crate::error::{LearnError, Result};
use crate::losses::nll_and_grad;
use crate::model::{Features, SequenceModel};
use crate::optim::AdamW;

/// Dialogues labeled successful, in their original order.
pub fn filter_successful(corpus: &[Dialogue]) -> Vec<Dialogue> {
    corpus.iter().filter(|d| d.reward == 1).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcLogRow {
    pub step: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

/// One supervised example: the features of a prefix and the agent token
/// that follows it.
#[derive(Debug, Clone)]
pub struct BcExample {
    pub features: Features,
    pub target: TokenId,
}

/// Agent-token prediction examples from every dialogue. Human tokens and
/// speaker prefixes never appear as targets.
pub fn bc_examples<M: SequenceModel + ?Sized>(corpus: &[Dialogue], vocab: &Vocab, model: &M) -> Vec<BcExample> {
    let mut out = Vec::new();
    for d in corpus {
        let (tokens, is_agent) = dialogue_stream(d, vocab);
        for p in (0..tokens.len()).filter(|&p| is_agent[p]) {
            out.push(BcExample {
                features: model.features(&tokens[..p]),
                target: tokens[p],
            });
        }
    }
    out
}

/// Mean agent-token NLL of a token stream given per-position logits.
/// `logits[p]` scores `tokens[p]` from `tokens[..p]`.
pub fn masked_nll(logits: &[Vec<f64>], tokens: &[TokenId], is_agent: &[bool]) -> f64 {
    let n = is_agent.iter().filter(|&&m| m).count();
    if n == 0 {
        return 0.0;
    }
    let mut scratch = vec![0.0; logits.first().map_or(0, Vec::len)];
    (0..tokens.len())
        .filter(|&p| is_agent[p])
        .map(|p| nll_and_grad(&logits[p], tokens[p] as usize, 0.0, &mut scratch))
        .sum::<f64>()
        / n as f64
}

/// Mean NLL over all examples.
pub fn bc_loss<M: SequenceModel + ?Sized>(model: &M, examples: &[BcExample]) -> f64 {
    if examples.is_empty() {
        return 0.0;
    }
    let mut scratch = vec![0.0; model.vocab_size()];
    examples
        .iter()
        .map(|e| {
            let fwd = model.forward_features(&e.features);
            nll_and_grad(&fwd.logits, e.target as usize, 0.0, &mut scratch)
        })
        .sum::<f64>()
        / examples.len() as f64
}

/// Seeded epoch-shuffled minibatch index stream.
pub(crate) struct Batcher {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
    size: usize,
}

impl Batcher {
    pub fn new(n: usize, size: usize, seed: u64) -> Self {
        let mut b = Batcher {
            order: (0..n).collect(),
            pos: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            size: size.min(n),
        };
        if b.size < n {
            b.order.shuffle(&mut b.rng);
        }
        b
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let n = self.order.len();
        if self.size == n {
            return self.order.clone();
        }
        let mut out = Vec::with_capacity(self.size);
        while out.len() < self.size {
            if self.pos == n {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Maximize the likelihood of agent tokens for `cfg.total_steps()` minibatch
/// updates. Returns the trained model and a per-step log.
pub fn train_bc<M: SequenceModel>(
    corpus: &[Dialogue],
    vocab: &Vocab,
    mut model: M,
    cfg: &TrainConfig,
) -> Result<(M, Vec<BcLogRow>)> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(LearnError::EmptyCorpus);
    }
    if model.vocab_size() != vocab.tokens().len() {
        return Err(LearnError::VocabMismatch {
            dataset: format!("{} tokens", vocab.tokens().len()),
            model: format!("{} tokens", model.vocab_size()),
        });
    }
    let examples = bc_examples(corpus, vocab, &model);
    if examples.is_empty() {
        return Err(LearnError::EmptyCorpus);
    }
    let mut opt = AdamW::new(model.params().len(), cfg.learning_rate, cfg.weight_decay);
    let mut batcher = Batcher::new(examples.len(), cfg.batch_size, cfg.seed);
    let mut grads = vec![0.0; model.params().len()];
    let mut dlogits = vec![0.0; model.vocab_size()];
    let mut log = Vec::with_capacity(cfg.total_steps());
    for step in 0..cfg.total_steps() {
        let batch = batcher.next_batch();
        let w = 1.0 / batch.len() as f64;
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut loss = 0.0;
        for &i in &batch {
            let e = &examples[i];
            let fwd = model.forward_features(&e.features);
            loss += w * nll_and_grad(&fwd.logits, e.target as usize, w, &mut dlogits);
            model.backward(&fwd, Some(&dlogits), None, &mut grads);
        }
        if !loss.is_finite() {
            return Err(LearnError::NonFiniteLoss {
                step,
                q_loss: loss,
                v_loss: 0.0,
            });
        }
        let grad_norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        opt.step(model.params_mut(), &grads);
        log.push(BcLogRow { step, loss, grad_norm });
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batcher_covers_each_epoch() {
        let mut b = Batcher::new(10, 5, 1);
        let mut seen: Vec<usize> = b.next_batch().into_iter().chain(b.next_batch()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
        let mut full = Batcher::new(3, 8, 1);
        assert_eq!(full.next_batch(), vec![0, 1, 2]);
    }
}
