use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LearnError, Result};

/// Training hyperparameters. Defaults reproduce the reference ILQL schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Discount per agent-token step.
    pub gamma: f64,
    /// Expectile for the value regression.
    pub tau: f64,
    /// Weight of the conservative log-sum-exp regularizer on Q.
    pub cql_weight: f64,
    /// Polyak rate for the target networks.
    pub polyak: f64,
    pub batch_size: usize,
    pub updates_per_iteration: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    /// Decoupled (AdamW-style) weight decay.
    pub weight_decay: f64,
    pub seed: u64,
    pub twin_q: bool,
    /// Backpropagate value losses into the base model instead of freezing it.
    pub finetune_base: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            tau: 0.8,
            cql_weight: 0.0,
            polyak: 0.005,
            batch_size: 128,
            updates_per_iteration: 60,
            iterations: 100,
            learning_rate: 1e-4,
            weight_decay: 0.0,
            seed: 0,
            twin_q: false,
            finetune_base: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(LearnError::InvalidConfig(what.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad("tau must be in (0, 1)");
        }
        if !(self.cql_weight >= 0.0) {
            return bad("cql_weight must be >= 0");
        }
        if !(self.polyak > 0.0 && self.polyak < 1.0) {
            return bad("polyak must be in (0, 1)");
        }
        if self.batch_size == 0 || self.updates_per_iteration == 0 {
            return bad("batch_size and updates_per_iteration must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning_rate must be positive and weight_decay non-negative");
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.iterations * self.updates_per_iteration
    }

    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(json)[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_out_of_range() {
        for cfg in [
            TrainConfig { tau: 1.0, ..Default::default() },
            TrainConfig { gamma: 0.0, ..Default::default() },
            TrainConfig { polyak: 0.0, ..Default::default() },
            TrainConfig { cql_weight: -1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
