//! Batches of episodes and their reports.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use imagine_core::TaskDescription;
use imagine_engine::Persona;

use crate::episode::{run_episode, DialogueAgent, EpisodeResult, EvalConfig, HumanDriver};
use crate::error::{Result, SimError};
use crate::human::{mix, HumanKind, SimHumanSpec};
use crate::metrics::{compute_metrics, EvalMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task_id: String,
    pub agent: String,
    pub human: HumanKind,
    pub config: EvalConfig,
    pub metrics: EvalMetrics,
    pub episodes: Vec<EpisodeResult>,
}

/// `n` humans drawn uniformly from catalog item × persona.
pub fn sample_humans(
    task: &TaskDescription,
    personas: &[Persona],
    n: usize,
    seed: u64,
    kind: HumanKind,
) -> Result<Vec<SimHumanSpec>> {
    if task.catalog.is_empty() {
        return Err(SimError::InvalidConfig(format!("task {} has no catalog to evaluate against", task.task_id)));
    }
    if personas.is_empty() {
        return Err(SimError::InvalidConfig("no personas to sample humans from".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x4a11));
    Ok((0..n)
        .map(|_| {
            let item = task.catalog.choose(&mut rng).expect("non-empty catalog");
            let persona = personas.choose(&mut rng).expect("non-empty personas");
            SimHumanSpec::new(kind, &item.name, persona.clone(), rng.gen())
        })
        .collect())
}

pub fn evaluate(
    agent: &dyn DialogueAgent,
    agent_name: &str,
    task: &TaskDescription,
    personas: &[Persona],
    cfg: &EvalConfig,
    driver: &HumanDriver,
) -> Result<EvalReport> {
    cfg.validate()?;
    let kind = match driver {
        HumanDriver::Scripted => HumanKind::Scripted,
        HumanDriver::Llm(_) => HumanKind::Llm,
    };
    let humans = sample_humans(task, personas, cfg.episodes, cfg.seed, kind)?;
    let episodes = humans
        .par_iter()
        .enumerate()
        .map(|(i, h)| run_episode(agent, task, h, driver, cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        task_id: task.task_id.clone(),
        agent: agent_name.to_string(),
        human: kind,
        config: cfg.clone(),
        metrics: compute_metrics(&episodes)?,
        episodes,
    })
}

impl EvalReport {
    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    /// One row per episode.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "episode,ground_truth,persona_id,first_recommendation,one_shot_success,final_success,utterances,agent_tokens")?;
        for e in &self.episodes {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{}",
                e.episode,
                e.ground_truth,
                e.persona_id,
                e.first_recommendation.as_deref().unwrap_or(""),
                e.one_shot_success,
                e.final_success,
                e.transcript.utterances.len(),
                e.agent_tokens.iter().sum::<usize>()
            )?;
        }
        Ok(())
    }
}
