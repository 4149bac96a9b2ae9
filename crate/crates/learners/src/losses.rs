//! Q and V objectives with analytic gradients with respect to the head
//! parameters and the hidden representations.

use imagine_core::Transition;

use crate::config::TrainConfig;
use crate::heads::ValueHeads;
use crate::model::SequenceModel;

/// A transition whose states are already encoded by the base model.
#[derive(Debug, Clone, Copy)]
pub struct HiddenTransition<'a> {
    pub h: &'a [f64],
    pub h_next: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub q_loss: f64,
    pub v_loss: f64,
}

fn log_softmax_parts(z: &[f64]) -> (f64, Vec<f64>) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (m + s.ln(), e.into_iter().map(|x| x / s).collect())
}

pub fn logsumexp(z: &[f64]) -> f64 {
    log_softmax_parts(z).0
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    log_softmax_parts(z).1
}

fn bellman_target(heads: &ValueHeads, t: &HiddenTransition, gamma: f64) -> f64 {
    let boot = if t.done { 0.0 } else { heads.target_v_value(t.h_next) };
    t.reward + gamma * boot
}

/// Q value regressed by V: the online Q (treated as a constant) or, with
/// twin heads, the minimum of the target heads.
fn detached_q(heads: &ValueHeads, t: &HiddenTransition) -> f64 {
    if heads.twin_q {
        heads
            .target_q_action(0, t.h, t.action)
            .min(heads.target_q_action(1, t.h, t.action))
    } else {
        heads.q_action(0, t.h, t.action)
    }
}

fn expectile_weight(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

pub fn q_loss_hidden(heads: &ValueHeads, batch: &[HiddenTransition], cfg: &TrainConfig) -> f64 {
    loss_and_grad(heads, batch, cfg, None, None).q_loss
}

pub fn v_loss_hidden(heads: &ValueHeads, batch: &[HiddenTransition], cfg: &TrainConfig) -> f64 {
    loss_and_grad(heads, batch, cfg, None, None).v_loss
}

/// Both losses; when buffers are given, their gradients are accumulated into
/// `grads` (head layout) and `dhidden` (one vector per transition, w.r.t. `h`).
/// Bootstrap targets and the Q inside the value regression are constants.
pub fn loss_and_grad(
    heads: &ValueHeads,
    batch: &[HiddenTransition],
    cfg: &TrainConfig,
    mut grads: Option<&mut [f64]>,
    mut dhidden: Option<&mut [Vec<f64>]>,
) -> LossParts {
    let n = batch.len() as f64;
    let hd = heads.hidden_dim;
    let v = heads.vocab_size;
    let mut out = LossParts::default();
    let mut dq = vec![0.0; v];
    for (i, t) in batch.iter().enumerate() {
        let y = bellman_target(heads, t, cfg.gamma);
        for k in 0..heads.q_heads() {
            let off = heads.q_offset(k);
            let q_a = heads.q_action(k, t.h, t.action);
            let err = q_a - y;
            out.q_loss += err * err / n;
            dq.iter_mut().for_each(|x| *x = 0.0);
            dq[t.action] = 2.0 * err / n;
            if cfg.cql_weight > 0.0 {
                let qs = heads.q_values_k(k, t.h);
                let (lse, p) = log_softmax_parts(&qs);
                out.q_loss += cfg.cql_weight * (lse - q_a) / n;
                for (d, pa) in dq.iter_mut().zip(&p) {
                    *d += cfg.cql_weight * pa / n;
                }
                dq[t.action] -= cfg.cql_weight / n;
            }
            if grads.is_none() && dhidden.is_none() {
                continue;
            }
            for (a, &g) in dq.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let w = off + a * hd;
                if let Some(gr) = grads.as_deref_mut() {
                    for j in 0..hd {
                        gr[w + j] += g * t.h[j];
                    }
                    gr[off + v * hd + a] += g;
                }
                if let Some(dh) = dhidden.as_deref_mut() {
                    for j in 0..hd {
                        dh[i][j] += g * heads.params[w + j];
                    }
                }
            }
        }

        let u = detached_q(heads, t) - heads.v_value(t.h);
        let w = expectile_weight(u, cfg.tau);
        out.v_loss += w * u * u / n;
        let dv = -2.0 * w * u / n;
        let off = heads.v_offset();
        if let Some(gr) = grads.as_deref_mut() {
            for j in 0..hd {
                gr[off + j] += dv * t.h[j];
            }
            gr[off + hd] += dv;
        }
        if let Some(dh) = dhidden.as_deref_mut() {
            for j in 0..hd {
                dh[i][j] += dv * heads.params[off + j];
            }
        }
    }
    out
}

/// Encode `batch` with `model` and evaluate both losses.
pub fn losses<M: SequenceModel + ?Sized>(
    model: &M,
    heads: &ValueHeads,
    batch: &[Transition],
    cfg: &TrainConfig,
) -> LossParts {
    let hs: Vec<(Vec<f64>, Vec<f64>)> = batch
        .iter()
        .map(|t| (model.hidden(&t.state), model.hidden(&t.next_state)))
        .collect();
    let ht: Vec<HiddenTransition> = batch
        .iter()
        .zip(&hs)
        .map(|(t, (h, hn))| HiddenTransition {
            h,
            h_next: hn,
            action: t.action as usize,
            reward: t.reward,
            done: t.done,
        })
        .collect();
    loss_and_grad(heads, &ht, cfg, None, None)
}

pub fn q_loss<M: SequenceModel + ?Sized>(
    model: &M,
    heads: &ValueHeads,
    batch: &[Transition],
    cfg: &TrainConfig,
) -> f64 {
    losses(model, heads, batch, cfg).q_loss
}

pub fn v_loss<M: SequenceModel + ?Sized>(
    model: &M,
    heads: &ValueHeads,
    batch: &[Transition],
    cfg: &TrainConfig,
) -> f64 {
    losses(model, heads, batch, cfg).v_loss
}

/// Mean negative log-likelihood of `targets` under `logits`; gradients
/// w.r.t. the logits are written into `dlogits` scaled by `weight`.
pub fn nll_and_grad(logits: &[f64], target: usize, weight: f64, dlogits: &mut [f64]) -> f64 {
    let (lse, p) = log_softmax_parts(logits);
    for (d, pa) in dlogits.iter_mut().zip(&p) {
        *d = weight * pa;
    }
    dlogits[target] -= weight;
    lse - logits[target]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_heads(q: &[f64], v: f64) -> ValueHeads {
        // hidden_dim 1, h = [1]: Q(s,a) = w_a + b_a, V = w + b.
        let mut heads = ValueHeads::new(1, q.len(), false, 0);
        heads.params.iter_mut().for_each(|p| *p = 0.0);
        for (a, &x) in q.iter().enumerate() {
            heads.params[a] = x;
        }
        let off = heads.v_offset();
        heads.params[off] = v;
        heads.target = heads.params.clone();
        heads
    }

    #[test]
    fn terminal_reward_loss() {
        let heads = one_hot_heads(&[0.0, 0.0], 0.0);
        let h = [1.0];
        let t = HiddenTransition {
            h: &h,
            h_next: &h,
            action: 0,
            reward: 1.0,
            done: true,
        };
        assert!((q_loss_hidden(&heads, &[t], &TrainConfig::default()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bellman_consistent_loss_is_zero() {
        let heads = one_hot_heads(&[1.98, 0.0], 2.0);
        let h = [1.0];
        let t = HiddenTransition {
            h: &h,
            h_next: &h,
            action: 0,
            reward: 0.0,
            done: false,
        };
        assert!(q_loss_hidden(&heads, &[t], &TrainConfig::default()).abs() < 1e-12);
    }

    #[test]
    fn expectile_weights() {
        let cfg = TrainConfig::default();
        let h = [1.0];
        let t = HiddenTransition {
            h: &h,
            h_next: &h,
            action: 0,
            reward: 0.0,
            done: true,
        };
        let up = one_hot_heads(&[1.0], 0.0);
        assert!((v_loss_hidden(&up, &[t], &cfg) - 0.8).abs() < 1e-12);
        let down = one_hot_heads(&[-1.0], 0.0);
        assert!((v_loss_hidden(&down, &[t], &cfg) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn nll_gradient() {
        let z = [0.3, -1.0, 2.0];
        let mut d = [0.0; 3];
        let l = nll_and_grad(&z, 1, 1.0, &mut d);
        let p = softmax(&z);
        assert!((l + p[1].ln()).abs() < 1e-12);
        assert!((d[1] - (p[1] - 1.0)).abs() < 1e-12);
    }
}
