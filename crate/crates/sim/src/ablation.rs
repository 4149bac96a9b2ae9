//! Desk-scale BC / filtered BC / offline RL comparison on a mock-world
//! corpus, evaluated against scripted humans.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use imagine_backend::{Backend, BackendConfig};
use imagine_core::mdp::build_dataset;
use imagine_core::corpus::corpus_hash;
use imagine_core::{Dialogue, TaskDescription, Tokenizer, Vocab};
use imagine_engine::{generate_corpus, parse_personas, GenerateConfig, Persona};
use imagine_learners::{
    filter_successful, train_bc, train_rl, BaseModel, ContextMlp, MlpSpec, PolicyArtifact, PolicyKind, TrainConfig,
};

use crate::episode::{EvalConfig, HumanDriver, PolicyAgent};
use crate::error::{Result, SimError};
use crate::human::{ACCEPT_REPLY, DEFAULT_OPENING, GENERIC_REPLY, NEGATIVE_REPLY, REJECT_REPLY, VAGUE_REPLY};
use crate::metrics::{compute_metrics, EvalMetrics};
use crate::mock_world::{ImaginedAgent, MockWorld};
use crate::runner::evaluate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub corpus_size: usize,
    pub success_ratio: f64,
    pub seeds: Vec<u64>,
    pub eval: EvalConfig,
    pub hidden_dim: usize,
    pub bc: TrainConfig,
    pub rl: TrainConfig,
    pub beta: f64,
    pub imagined: ImaginedAgent,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            corpus_size: 2000,
            success_ratio: 0.5,
            seeds: vec![0, 1, 2],
            eval: EvalConfig {
                episodes: 200,
                ..EvalConfig::default()
            },
            hidden_dim: 128,
            bc: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 64,
                updates_per_iteration: 60,
                iterations: 100,
                ..TrainConfig::default()
            },
            rl: TrainConfig {
                learning_rate: 1e-3,
                tau: 0.7,
                finetune_base: true,
                ..TrainConfig::default()
            },
            beta: 16.0,
            imagined: ImaginedAgent { ask: 0.8, use_liked: 0.9 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub corpus_successes: usize,
    pub bc: EvalMetrics,
    pub fbc: EvalMetrics,
    pub rl: EvalMetrics,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub per_seed: Vec<SeedResult>,
    /// Metrics over all episodes of all seeds.
    pub bc: EvalMetrics,
    pub fbc: EvalMetrics,
    pub rl: EvalMetrics,
}

/// Every word the scripted world can produce, so evaluation transcripts
/// never fall outside the vocabulary.
pub fn world_vocab(task: &TaskDescription, corpus: &[Dialogue]) -> Vocab {
    let mut texts: Vec<String> = corpus
        .iter()
        .flat_map(|d| d.utterances.iter().map(|u| u.text.clone()))
        .collect();
    texts.extend(task.categories.iter().map(|c| format!("Yes, I love {}!", c.name)));
    texts.extend(task.catalog.iter().map(|i| i.name.clone()));
    texts.extend(task.opening.clone());
    texts.extend(task.greeting.clone());
    texts.extend(
        [DEFAULT_OPENING, ACCEPT_REPLY, REJECT_REPLY, NEGATIVE_REPLY, VAGUE_REPLY, GENERIC_REPLY].map(String::from),
    );
    Vocab::build(texts.iter().map(String::as_str), false)
}

pub struct TrainedAgents {
    pub bc: PolicyArtifact,
    pub fbc: PolicyArtifact,
    pub rl: PolicyArtifact,
}

pub fn train_agents(task: &TaskDescription, corpus: &[Dialogue], cfg: &AblationConfig, seed: u64) -> Result<TrainedAgents> {
    let vocab = world_vocab(task, corpus);
    let mut spec = MlpSpec::new(vocab.tokens().len(), vocab.specials());
    spec.hidden_dim = cfg.hidden_dim;
    let hash = corpus_hash(corpus);
    let bc_cfg = TrainConfig { seed, ..cfg.bc.clone() };
    let (bc, _) = train_bc(corpus, &vocab, ContextMlp::new(spec.clone(), seed), &bc_cfg)?;
    let successes = filter_successful(corpus);
    let (fbc, _) = train_bc(&successes, &vocab, ContextMlp::new(spec, seed), &bc_cfg)?;
    let ds = build_dataset(corpus, &vocab)?;
    let rl_cfg = TrainConfig { seed, ..cfg.rl.clone() };
    let bc_base = BaseModel::Mlp(bc.clone());
    let out = train_rl(&ds, bc_base.clone(), &vocab.vocab_id(), &rl_cfg)?;
    let art = |kind, base, heads, beta, c: &TrainConfig, h: &str| {
        PolicyArtifact::new(kind, base, heads, beta, vocab.clone(), &task.task_id, c, h)
    };
    let rl = PolicyArtifact::from_rl(out, bc_base, cfg.beta, vocab.clone(), &task.task_id, &rl_cfg, &hash)?;
    Ok(TrainedAgents {
        bc: art(PolicyKind::Bc, BaseModel::Mlp(bc), None, 0.0, &bc_cfg, &hash)?,
        fbc: art(PolicyKind::Fbc, BaseModel::Mlp(fbc), None, 0.0, &bc_cfg, &corpus_hash(&successes))?,
        rl,
    })
}

pub fn mock_corpus(
    task: &TaskDescription,
    personas_text: &str,
    n: usize,
    success_ratio: f64,
    seed: u64,
    agent: ImaginedAgent,
) -> Result<(Vec<Persona>, Vec<Dialogue>)> {
    let mut world = MockWorld::new(task.clone(), Some(personas_text.to_string()));
    world.agent = agent;
    let backend = Backend::mock(
        BackendConfig {
            max_retries: 0,
            retry_backoff_ms: 0,
            ..BackendConfig::mock()
        },
        world.backend(),
    )?;
    let personas = parse_personas(personas_text)?;
    let gen = GenerateConfig {
        n,
        success_ratio,
        seed,
        ..GenerateConfig::default()
    };
    Ok((personas.clone(), generate_corpus(task, &personas, &gen, &backend)?.dialogues))
}

pub fn run_ablation(task: &TaskDescription, personas_text: &str, cfg: &AblationConfig) -> Result<AblationResult> {
    if cfg.seeds.is_empty() {
        return Err(SimError::InvalidConfig("ablation needs at least one seed".into()));
    }
    let mut per_seed = Vec::new();
    let mut pooled: [Vec<_>; 3] = Default::default();
    for &seed in &cfg.seeds {
        let start = Instant::now();
        let (personas, corpus) = mock_corpus(task, personas_text, cfg.corpus_size, cfg.success_ratio, seed, cfg.imagined)?;
        let agents = train_agents(task, &corpus, cfg, seed)?;
        let eval = EvalConfig {
            seed: seed.wrapping_add(1000),
            ..cfg.eval.clone()
        };
        let mut metrics = Vec::new();
        for (k, art) in [&agents.bc, &agents.fbc, &agents.rl].into_iter().enumerate() {
            let agent = PolicyAgent::new(art, &eval);
            let report = evaluate(&agent, &art.kind.to_string(), task, &personas, &eval, &HumanDriver::Scripted)?;
            metrics.push(report.metrics);
            pooled[k].extend(report.episodes);
        }
        let r = SeedResult {
            seed,
            corpus_successes: corpus.iter().filter(|d| d.reward == 1).count(),
            bc: metrics[0],
            fbc: metrics[1],
            rl: metrics[2],
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("ablation seed {seed}: {r:?}");
        per_seed.push(r);
    }
    Ok(AblationResult {
        per_seed,
        bc: compute_metrics(&pooled[0])?,
        fbc: compute_metrics(&pooled[1])?,
        rl: compute_metrics(&pooled[2])?,
    })
}
