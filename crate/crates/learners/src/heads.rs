//! Linear Q and V heads on top of a base model's hidden representation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LearnError, Result};

/// Online heads plus their Polyak-averaged targets, all in one flat layout:
/// `[q_w (V×H), q_b (V), (q2_w, q2_b), v_w (H), v_b (1)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueHeads {
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub twin_q: bool,
    #[serde(skip)]
    pub params: Vec<f64>,
    #[serde(skip)]
    pub target: Vec<f64>,
}

impl ValueHeads {
    pub fn new(hidden_dim: usize, vocab_size: usize, twin_q: bool, seed: u64) -> Self {
        let len = Self::param_len(hidden_dim, vocab_size, twin_q);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_4ead);
        let scale = 0.01 / (hidden_dim as f64).sqrt();
        let params: Vec<f64> = (0..len).map(|_| rng.gen_range(-scale..scale)).collect();
        ValueHeads {
            hidden_dim,
            vocab_size,
            twin_q,
            target: params.clone(),
            params,
        }
    }

    pub fn param_len(hidden_dim: usize, vocab_size: usize, twin_q: bool) -> usize {
        let q = vocab_size * (hidden_dim + 1);
        q * if twin_q { 2 } else { 1 } + hidden_dim + 1
    }

    pub fn with_params(mut self, params: Vec<f64>, target: Vec<f64>) -> Result<Self> {
        let len = Self::param_len(self.hidden_dim, self.vocab_size, self.twin_q);
        if params.len() != len || target.len() != len {
            return Err(LearnError::ShapeMismatch(len, params.len().max(target.len())));
        }
        self.params = params;
        self.target = target;
        Ok(self)
    }

    fn q_block(&self) -> usize {
        self.vocab_size * (self.hidden_dim + 1)
    }

    /// Offset of Q head `k` (0 or 1).
    pub fn q_offset(&self, k: usize) -> usize {
        k * self.q_block()
    }

    pub fn v_offset(&self) -> usize {
        self.q_block() * if self.twin_q { 2 } else { 1 }
    }

    pub fn q_heads(&self) -> usize {
        if self.twin_q {
            2
        } else {
            1
        }
    }

    fn q_from(&self, p: &[f64], k: usize, h: &[f64]) -> Vec<f64> {
        let (hd, off) = (self.hidden_dim, self.q_offset(k));
        let bias = off + self.vocab_size * hd;
        (0..self.vocab_size)
            .map(|a| dot(&p[off + a * hd..off + (a + 1) * hd], h) + p[bias + a])
            .collect()
    }

    fn q_one(&self, p: &[f64], k: usize, h: &[f64], a: usize) -> f64 {
        let (hd, off) = (self.hidden_dim, self.q_offset(k));
        dot(&p[off + a * hd..off + (a + 1) * hd], h) + p[off + self.vocab_size * hd + a]
    }

    fn v_from(&self, p: &[f64], h: &[f64]) -> f64 {
        let off = self.v_offset();
        dot(&p[off..off + self.hidden_dim], h) + p[off + self.hidden_dim]
    }

    /// Q̂(s,·) from the first online head.
    pub fn q_values(&self, h: &[f64]) -> Vec<f64> {
        self.q_from(&self.params, 0, h)
    }

    pub fn q_values_k(&self, k: usize, h: &[f64]) -> Vec<f64> {
        self.q_from(&self.params, k, h)
    }

    pub fn q_action(&self, k: usize, h: &[f64], a: usize) -> f64 {
        self.q_one(&self.params, k, h, a)
    }

    pub fn target_q_action(&self, k: usize, h: &[f64], a: usize) -> f64 {
        self.q_one(&self.target, k, h, a)
    }

    pub fn v_value(&self, h: &[f64]) -> f64 {
        self.v_from(&self.params, h)
    }

    pub fn target_v_value(&self, h: &[f64]) -> f64 {
        self.v_from(&self.target, h)
    }

    /// Q used when acting: the elementwise minimum over heads when twin.
    pub fn policy_q(&self, h: &[f64]) -> Vec<f64> {
        let mut q = self.q_values(h);
        if self.twin_q {
            for (a, b) in q.iter_mut().zip(self.q_values_k(1, h)) {
                *a = a.min(b);
            }
        }
        q
    }

    /// Move every target parameter toward its online counterpart.
    pub fn update_targets(&mut self, rate: f64) -> Result<()> {
        polyak_update(&mut self.target, &self.params, rate)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `target ← (1−rate)·target + rate·online`.
pub fn polyak_update(target: &mut [f64], online: &[f64], rate: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(LearnError::ShapeMismatch(target.len(), online.len()));
    }
    for (t, o) in target.iter_mut().zip(online) {
        *t = (1.0 - rate) * *t + rate * o;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyak_edges() {
        let mut t = vec![0.0, 2.0];
        polyak_update(&mut t, &[1.0, 4.0], 0.0).unwrap();
        assert_eq!(t, vec![0.0, 2.0]);
        polyak_update(&mut t, &[1.0, 4.0], 1.0).unwrap();
        assert_eq!(t, vec![1.0, 4.0]);
        let mut t = vec![0.0];
        polyak_update(&mut t, &[1.0], 0.005).unwrap();
        assert!((t[0] - 0.005).abs() < 1e-15);
        assert!(polyak_update(&mut t, &[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn layout_lengths() {
        let h = ValueHeads::new(3, 4, true, 0);
        assert_eq!(h.params.len(), 2 * 4 * 4 + 4);
        assert_eq!(h.v_offset(), 32);
        assert_eq!(h.q_values(&[1.0, 0.0, 0.0]).len(), 4);
    }
}
