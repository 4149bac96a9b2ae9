//! Aggregate evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::episode::EpisodeResult;
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Pooled over all agent utterances.
    pub tokens_per_utterance: f64,
    pub one_shot_success: f64,
    pub final_success: f64,
    /// Mean utterances per episode, both speakers.
    pub episode_length: f64,
    pub episodes: usize,
}

pub fn compute_metrics(results: &[EpisodeResult]) -> Result<EvalMetrics> {
    if results.is_empty() {
        return Err(SimError::EmptyResults);
    }
    let n = results.len() as f64;
    let (tokens, utterances) = results
        .iter()
        .flat_map(|r| &r.agent_tokens)
        .fold((0usize, 0usize), |(t, u), &k| (t + k, u + 1));
    let rate = |f: fn(&EpisodeResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    Ok(EvalMetrics {
        tokens_per_utterance: if utterances == 0 { 0.0 } else { tokens as f64 / utterances as f64 },
        one_shot_success: rate(|r| r.one_shot_success),
        final_success: rate(|r| r.final_success),
        episode_length: results.iter().map(|r| r.transcript.utterances.len()).sum::<usize>() as f64 / n,
        episodes: results.len(),
    })
}

/// Reported reference numbers for the travel task against 50 simulated
/// humans. Kept for comparison in reports; nothing here reproduces them.
pub mod reference {
    pub struct Row {
        pub agent: &'static str,
        pub tokens_per_utterance: f64,
        pub one_shot_success: f64,
        pub final_success: f64,
    }

    pub const ROWS: [Row; 2] = [
        Row {
            agent: "GPT",
            tokens_per_utterance: 118.0,
            one_shot_success: 0.18,
            final_success: 0.82,
        },
        Row {
            agent: "IE+RL",
            tokens_per_utterance: 43.0,
            one_shot_success: 0.44,
            final_success: 0.86,
        },
    ];
}
