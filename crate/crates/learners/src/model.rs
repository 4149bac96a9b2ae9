//! Autoregressive next-token scorers.
//!
//! A model maps a token prefix to a hidden representation and a logit vector
//! over the vocabulary. Parameters live in one flat vector so optimizers,
//! Polyak averaging and checkpoint blobs treat every model alike.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use imagine_core::{SpecialTokens, TokenId};

/// Token-derived inputs of a prefix; independent of parameters, so training
/// loops compute them once per state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Features {
    /// Most recent token first; `None` past the start of the prefix.
    pub window: Vec<Option<TokenId>>,
    /// Distinct word tokens spoken by the human so far.
    pub human: Vec<TokenId>,
    /// Distinct word tokens of the most recent human utterance.
    pub last_human: Vec<TokenId>,
    /// Distinct word tokens spoken by the agent so far.
    pub agent: Vec<TokenId>,
    /// Number of completed agent turns.
    pub turn: usize,
}

impl Features {
    pub fn extract(prefix: &[TokenId], window: usize, sp: &SpecialTokens) -> Self {
        #[derive(PartialEq)]
        enum Mode {
            None,
            Human,
            Agent,
        }
        let mut mode = Mode::None;
        let mut f = Features::default();
        for &t in prefix {
            if t == sp.human_prefix {
                mode = Mode::Human;
                f.last_human.clear();
            } else if t == sp.agent_prefix {
                mode = Mode::Agent;
            } else if t == sp.end_of_turn {
                f.turn += 1;
            } else if mode == Mode::Human {
                f.human.push(t);
                f.last_human.push(t);
            } else if mode == Mode::Agent {
                f.agent.push(t);
            }
        }
        for v in [&mut f.human, &mut f.last_human, &mut f.agent] {
            v.sort_unstable();
            v.dedup();
        }
        f.window = (0..window).map(|j| prefix.len().checked_sub(j + 1).map(|i| prefix[i])).collect();
        f
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub features: Features,
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

pub trait SequenceModel {
    fn vocab_size(&self) -> usize;
    fn hidden_dim(&self) -> usize;
    fn max_context(&self) -> usize;
    fn specials(&self) -> SpecialTokens;
    fn features(&self, prefix: &[TokenId]) -> Features;
    fn forward_features(&self, f: &Features) -> Forward;
    /// Accumulate parameter gradients given upstream gradients on the logits
    /// and/or the hidden representation.
    fn backward(&self, fwd: &Forward, dlogits: Option<&[f64]>, dhidden: Option<&[f64]>, grads: &mut [f64]);
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];

    fn forward(&self, prefix: &[TokenId]) -> Forward {
        self.forward_features(&self.features(prefix))
    }

    fn hidden(&self, prefix: &[TokenId]) -> Vec<f64> {
        self.forward(prefix).hidden
    }

    fn logits(&self, prefix: &[TokenId]) -> Vec<f64> {
        self.forward(prefix).logits
    }

    /// Hidden representation after every prefix `tokens[..i]`, `i = 0..=len`.
    fn hidden_states(&self, tokens: &[TokenId]) -> Vec<Vec<f64>> {
        (0..=tokens.len()).map(|i| self.hidden(&tokens[..i])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub vocab_size: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub bag_dim: usize,
    pub hidden_dim: usize,
    pub turn_buckets: usize,
    pub max_context: usize,
    pub specials: SpecialTokens,
}

impl MlpSpec {
    pub fn new(vocab_size: usize, specials: SpecialTokens) -> Self {
        MlpSpec {
            vocab_size,
            window: 4,
            embed_dim: 16,
            bag_dim: 16,
            hidden_dim: 768,
            turn_buckets: 8,
            max_context: 1024,
            specials,
        }
    }

    fn input_dim(&self) -> usize {
        self.window * self.embed_dim + 3 * self.bag_dim + self.turn_buckets
    }
}

#[derive(Debug, Clone, Copy)]
struct MlpLayout {
    window_emb: usize,
    human_bag: usize,
    last_bag: usize,
    agent_bag: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    total: usize,
}

impl MlpLayout {
    fn of(s: &MlpSpec) -> Self {
        let v = s.vocab_size;
        let window_emb = 0;
        let human_bag = window_emb + (v + 1) * s.embed_dim;
        let last_bag = human_bag + v * s.bag_dim;
        let agent_bag = last_bag + v * s.bag_dim;
        let w1 = agent_bag + v * s.bag_dim;
        let b1 = w1 + s.hidden_dim * s.input_dim();
        let w2 = b1 + s.hidden_dim;
        let b2 = w2 + v * s.hidden_dim;
        MlpLayout {
            window_emb,
            human_bag,
            last_bag,
            agent_bag,
            w1,
            b1,
            w2,
            b2,
            total: b2 + v,
        }
    }
}

/// Window-plus-bags MLP: embeddings of the last few tokens, speaker-separated
/// bag-of-words summaries of the history and a turn counter feed one tanh
/// layer, whose output is the hidden representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextMlp {
    pub spec: MlpSpec,
    #[serde(skip)]
    params: Vec<f64>,
}

fn bag_scale(n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        1.0 / (n as f64).sqrt()
    }
}

impl ContextMlp {
    pub fn new(spec: MlpSpec, seed: u64) -> Self {
        let l = MlpLayout::of(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; l.total];
        let mut fill = |range: std::ops::Range<usize>, scale: f64| {
            for p in &mut params[range] {
                *p = rng.gen_range(-scale..scale);
            }
        };
        // Unit-variance embeddings and a first layer that starts near
        // saturation, so that small optimizer steps move the logits.
        fill(l.window_emb..l.w1, 3f64.sqrt());
        fill(l.w1..l.b1, 3.0 * (3.0 / spec.input_dim() as f64).sqrt());
        fill(l.w2..l.b2, (3.0 / spec.hidden_dim as f64).sqrt() * 0.1);
        ContextMlp { spec, params }
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Option<Self> {
        (params.len() == MlpLayout::of(&spec).total).then_some(ContextMlp { spec, params })
    }

    pub fn param_count(spec: &MlpSpec) -> usize {
        MlpLayout::of(spec).total
    }
}

impl SequenceModel for ContextMlp {
    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn hidden_dim(&self) -> usize {
        self.spec.hidden_dim
    }

    fn max_context(&self) -> usize {
        self.spec.max_context
    }

    fn specials(&self) -> SpecialTokens {
        self.spec.specials
    }

    fn features(&self, prefix: &[TokenId]) -> Features {
        Features::extract(prefix, self.spec.window, &self.spec.specials)
    }

    fn forward_features(&self, f: &Features) -> Forward {
        let s = &self.spec;
        let l = MlpLayout::of(s);
        let p = &self.params;
        let (e, b, v, hd) = (s.embed_dim, s.bag_dim, s.vocab_size, s.hidden_dim);
        let mut x = vec![0.0; s.input_dim()];
        for (j, tok) in f.window.iter().enumerate() {
            let row = tok.map_or(v, |t| t as usize);
            x[j * e..(j + 1) * e].copy_from_slice(&p[l.window_emb + row * e..l.window_emb + (row + 1) * e]);
        }
        let base = s.window * e;
        for (k, (bag, off)) in [(&f.human, l.human_bag), (&f.last_human, l.last_bag), (&f.agent, l.agent_bag)]
            .into_iter()
            .enumerate()
        {
            let scale = bag_scale(bag.len());
            let dst = &mut x[base + k * b..base + (k + 1) * b];
            for &t in bag {
                let src = &p[off + t as usize * b..off + (t as usize + 1) * b];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += scale * s;
                }
            }
        }
        x[base + 3 * b + f.turn.min(s.turn_buckets - 1)] = 1.0;

        let d = s.input_dim();
        let mut hidden = vec![0.0; hd];
        for (i, h) in hidden.iter_mut().enumerate() {
            let w = &p[l.w1 + i * d..l.w1 + (i + 1) * d];
            let pre: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + p[l.b1 + i];
            *h = pre.tanh();
        }
        let mut logits = vec![0.0; v];
        for (o, z) in logits.iter_mut().enumerate() {
            let w = &p[l.w2 + o * hd..l.w2 + (o + 1) * hd];
            *z = w.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>() + p[l.b2 + o];
        }
        Forward {
            features: f.clone(),
            input: x,
            hidden,
            logits,
        }
    }

    fn backward(&self, fwd: &Forward, dlogits: Option<&[f64]>, dhidden: Option<&[f64]>, grads: &mut [f64]) {
        let s = &self.spec;
        let l = MlpLayout::of(s);
        let p = &self.params;
        let (e, b, v, hd, d) = (s.embed_dim, s.bag_dim, s.vocab_size, s.hidden_dim, s.input_dim());
        let mut dh = dhidden.map_or_else(|| vec![0.0; hd], <[f64]>::to_vec);
        if let Some(dz) = dlogits {
            for (o, &g) in dz.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grads[l.b2 + o] += g;
                let w = &p[l.w2 + o * hd..l.w2 + (o + 1) * hd];
                let gw = &mut grads[l.w2 + o * hd..l.w2 + (o + 1) * hd];
                for i in 0..hd {
                    gw[i] += g * fwd.hidden[i];
                    dh[i] += g * w[i];
                }
            }
        }
        let mut dx = vec![0.0; d];
        for i in 0..hd {
            let dpre = dh[i] * (1.0 - fwd.hidden[i] * fwd.hidden[i]);
            if dpre == 0.0 {
                continue;
            }
            grads[l.b1 + i] += dpre;
            let w = &p[l.w1 + i * d..l.w1 + (i + 1) * d];
            let gw = &mut grads[l.w1 + i * d..l.w1 + (i + 1) * d];
            for k in 0..d {
                gw[k] += dpre * fwd.input[k];
                dx[k] += dpre * w[k];
            }
        }
        let f = &fwd.features;
        for (j, tok) in f.window.iter().enumerate() {
            let row = tok.map_or(v, |t| t as usize);
            let g = &mut grads[l.window_emb + row * e..l.window_emb + (row + 1) * e];
            for (gi, di) in g.iter_mut().zip(&dx[j * e..(j + 1) * e]) {
                *gi += di;
            }
        }
        let base = s.window * e;
        for (k, (bag, off)) in [(&f.human, l.human_bag), (&f.last_human, l.last_bag), (&f.agent, l.agent_bag)]
            .into_iter()
            .enumerate()
        {
            let scale = bag_scale(bag.len());
            let src = &dx[base + k * b..base + (k + 1) * b];
            for &t in bag {
                let g = &mut grads[off + t as usize * b..off + (t as usize + 1) * b];
                for (gi, di) in g.iter_mut().zip(src) {
                    *gi += scale * di;
                }
            }
        }
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularSpec {
    pub vocab_size: usize,
    pub max_context: usize,
    pub specials: SpecialTokens,
}

/// State = last token. The hidden representation is its one-hot encoding
/// (one extra slot for the empty prefix) and logits are a lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    pub spec: TabularSpec,
    #[serde(skip)]
    params: Vec<f64>,
}

impl TabularModel {
    pub fn new(spec: TabularSpec) -> Self {
        let n = (spec.vocab_size + 1) * spec.vocab_size;
        TabularModel {
            spec,
            params: vec![0.0; n],
        }
    }

    pub fn from_params(spec: TabularSpec, params: Vec<f64>) -> Option<Self> {
        (params.len() == (spec.vocab_size + 1) * spec.vocab_size).then_some(TabularModel { spec, params })
    }

    fn row(&self, f: &Features) -> usize {
        f.window.first().copied().flatten().map_or(self.spec.vocab_size, |t| t as usize)
    }
}

impl SequenceModel for TabularModel {
    fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    fn hidden_dim(&self) -> usize {
        self.spec.vocab_size + 1
    }

    fn max_context(&self) -> usize {
        self.spec.max_context
    }

    fn specials(&self) -> SpecialTokens {
        self.spec.specials
    }

    fn features(&self, prefix: &[TokenId]) -> Features {
        Features {
            window: vec![prefix.last().copied()],
            ..Default::default()
        }
    }

    fn forward_features(&self, f: &Features) -> Forward {
        let v = self.spec.vocab_size;
        let row = self.row(f);
        let mut hidden = vec![0.0; v + 1];
        hidden[row] = 1.0;
        Forward {
            features: f.clone(),
            input: Vec::new(),
            hidden,
            logits: self.params[row * v..(row + 1) * v].to_vec(),
        }
    }

    fn backward(&self, fwd: &Forward, dlogits: Option<&[f64]>, _dhidden: Option<&[f64]>, grads: &mut [f64]) {
        let v = self.spec.vocab_size;
        let row = self.row(&fwd.features);
        if let Some(dz) = dlogits {
            for (g, d) in grads[row * v..(row + 1) * v].iter_mut().zip(dz) {
                *g += d;
            }
        }
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
}

/// Closed set of model architectures that checkpoints can hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum BaseModel {
    Mlp(ContextMlp),
    Tabular(TabularModel),
}

impl BaseModel {
    /// Parameter count implied by the architecture alone.
    pub fn param_len_hint(&self) -> usize {
        match self {
            BaseModel::Mlp(m) => ContextMlp::param_count(&m.spec),
            BaseModel::Tabular(m) => (m.spec.vocab_size + 1) * m.spec.vocab_size,
        }
    }

    /// Re-attach a parameter blob to a deserialized architecture description.
    pub fn with_params(self, params: Vec<f64>) -> Option<Self> {
        match self {
            BaseModel::Mlp(m) => ContextMlp::from_params(m.spec, params).map(BaseModel::Mlp),
            BaseModel::Tabular(m) => TabularModel::from_params(m.spec, params).map(BaseModel::Tabular),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            BaseModel::Mlp($m) => $e,
            BaseModel::Tabular($m) => $e,
        }
    };
}

impl SequenceModel for BaseModel {
    fn vocab_size(&self) -> usize {
        delegate!(self, m => m.vocab_size())
    }
    fn hidden_dim(&self) -> usize {
        delegate!(self, m => m.hidden_dim())
    }
    fn max_context(&self) -> usize {
        delegate!(self, m => m.max_context())
    }
    fn specials(&self) -> SpecialTokens {
        delegate!(self, m => m.specials())
    }
    fn features(&self, prefix: &[TokenId]) -> Features {
        delegate!(self, m => m.features(prefix))
    }
    fn forward_features(&self, f: &Features) -> Forward {
        delegate!(self, m => m.forward_features(f))
    }
    fn backward(&self, fwd: &Forward, dlogits: Option<&[f64]>, dhidden: Option<&[f64]>, grads: &mut [f64]) {
        delegate!(self, m => m.backward(fwd, dlogits, dhidden, grads))
    }
    fn params(&self) -> &[f64] {
        delegate!(self, m => m.params())
    }
    fn params_mut(&mut self) -> &mut [f64] {
        delegate!(self, m => m.params_mut())
    }
}
