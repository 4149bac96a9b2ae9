use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use imagine_learners::{loss_and_grad, q_loss_hidden, v_loss_hidden, HiddenTransition, TrainConfig, ValueHeads};

struct Case {
    heads: ValueHeads,
    cfg: TrainConfig,
    hs: Vec<(Vec<f64>, Vec<f64>, usize, f64, bool)>,
}

impl Case {
    fn batch(&self) -> Vec<HiddenTransition<'_>> {
        self.hs
            .iter()
            .map(|(h, hn, a, r, d)| HiddenTransition {
                h,
                h_next: hn,
                action: *a,
                reward: *r,
                done: *d,
            })
            .collect()
    }
}

fn random_case(rng: &mut ChaCha8Rng, hidden: usize, vocab: usize) -> Case {
    let twin = rng.gen_bool(0.5);
    let mut heads = ValueHeads::new(hidden, vocab, twin, rng.gen());
    heads.params.iter_mut().for_each(|p| *p = rng.gen_range(-1.0..1.0));
    heads.target.iter_mut().for_each(|p| *p = rng.gen_range(-1.0..1.0));
    let cfg = TrainConfig {
        gamma: rng.gen_range(0.5..1.0),
        tau: rng.gen_range(0.05..0.95),
        cql_weight: if rng.gen_bool(0.5) { rng.gen_range(0.1..2.0) } else { 0.0 },
        twin_q: twin,
        ..TrainConfig::default()
    };
    let n = rng.gen_range(1..9);
    let hs = (0..n)
        .map(|_| {
            let h: Vec<f64> = (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hn: Vec<f64> = (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let done = rng.gen_bool(0.3);
            let r = if done { rng.gen_range(0..2) as f64 } else { 0.0 };
            (h, hn, rng.gen_range(0..vocab), r, done)
        })
        .collect();
    Case { heads, cfg, hs }
}

/// Scalar-loop reading of the layout `[q_w (V×H), q_b (V), ..., v_w (H), v_b]`.
fn q_of(p: &[f64], off: usize, hidden: usize, vocab: usize, h: &[f64], a: usize) -> f64 {
    let mut s = p[off + vocab * hidden + a];
    for j in 0..hidden {
        s += p[off + a * hidden + j] * h[j];
    }
    s
}

fn v_of(p: &[f64], off: usize, hidden: usize, h: &[f64]) -> f64 {
    let mut s = p[off + hidden];
    for j in 0..hidden {
        s += p[off + j] * h[j];
    }
    s
}

fn oracle(c: &Case) -> (f64, f64) {
    let (hd, v) = (c.heads.hidden_dim, c.heads.vocab_size);
    let qblock = v * (hd + 1);
    let heads_n = if c.cfg.twin_q { 2 } else { 1 };
    let voff = qblock * heads_n;
    let (p, t) = (&c.heads.params, &c.heads.target);
    let n = c.hs.len() as f64;
    let (mut ql, mut vl) = (0.0, 0.0);
    for (h, hn, a, r, done) in &c.hs {
        let y = r + if *done { 0.0 } else { c.cfg.gamma * v_of(t, voff, hd, hn) };
        for k in 0..heads_n {
            let qa = q_of(p, k * qblock, hd, v, h, *a);
            ql += (y - qa).powi(2) / n;
            if c.cfg.cql_weight > 0.0 {
                let mut m = f64::NEG_INFINITY;
                for b in 0..v {
                    m = m.max(q_of(p, k * qblock, hd, v, h, b));
                }
                let mut s = 0.0;
                for b in 0..v {
                    s += (q_of(p, k * qblock, hd, v, h, b) - m).exp();
                }
                ql += c.cfg.cql_weight * (m + s.ln() - qa) / n;
            }
        }
        let qd = if c.cfg.twin_q {
            q_of(t, 0, hd, v, h, *a).min(q_of(t, qblock, hd, v, h, *a))
        } else {
            q_of(p, 0, hd, v, h, *a)
        };
        let u = qd - v_of(p, voff, hd, h);
        let w = if u < 0.0 { 1.0 - c.cfg.tau } else { c.cfg.tau };
        vl += w * u * u / n;
    }
    (ql, vl)
}

#[test]
fn losses_match_scalar_oracle_on_100_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c = random_case(&mut rng, 5, 7);
        let (ql, vl) = oracle(&c);
        let b = c.batch();
        let dq = (q_loss_hidden(&c.heads, &b, &c.cfg) - ql).abs();
        let dv = (v_loss_hidden(&c.heads, &b, &c.cfg) - vl).abs();
        worst = worst.max(dq).max(dv);
    }
    println!("max |loss - oracle| over 100 batches: {worst:.3e}");
    assert!(worst <= 1e-6);
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Q-block gradients against central differences of the Q loss and V-block
/// gradients against central differences of the V loss (the regression
/// target Q is a constant there).
#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let mut c = random_case(&mut rng, 3, 5);
        let len = c.heads.params.len();
        assert!(len <= 100);
        let mut grads = vec![0.0; len];
        loss_and_grad(&c.heads, &c.batch(), &c.cfg, Some(&mut grads), None);
        let voff = c.heads.v_offset();
        let eps = 1e-6;
        for i in 0..len {
            let orig = c.heads.params[i];
            let eval = |c: &Case| {
                if i < voff {
                    q_loss_hidden(&c.heads, &c.batch(), &c.cfg)
                } else {
                    v_loss_hidden(&c.heads, &c.batch(), &c.cfg)
                }
            };
            c.heads.params[i] = orig + eps;
            let up = eval(&c);
            c.heads.params[i] = orig - eps;
            let down = eval(&c);
            c.heads.params[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let e = rel_err(grads[i], fd);
            assert!(e <= 1e-4, "param {i}: analytic {} vs fd {fd}", grads[i]);
            worst = worst.max(e);
        }
    }
    println!("max relative gradient error: {worst:.3e}");
}
