//! Proximal policy optimization over the simulated environment.

mod gae;
mod rollout;
mod train;
mod update;

pub use gae::{compute_gae, normalize_advantages};
pub use rollout::{collect_rollout, observation_arrays, CompletedEpisode, RolloutWorkers, Trajectory};
pub use train::{arch_for, train, BatchMetrics, TrainOutcome, METRICS_HEADER};
pub use update::{ppo_update, UpdateStats};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::nn::NeuralError;

#[derive(Debug, Error)]
pub enum PpoError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("environment {env} failed: {source}")]
    Env {
        env: usize,
        #[source]
        source: EnvError,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss { epoch: usize, minibatch: usize },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub total_samples: u64,
    pub batch_size: usize,
    pub minibatches: usize,
    pub epochs: usize,
    pub clip: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    /// Environments stepped in lockstep during collection.
    pub num_envs: usize,
    /// Initial log standard deviation of the action distribution.
    pub init_log_std: f64,
    /// Write a checkpoint every this many batches; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            total_samples: 2_000_000,
            batch_size: 16384,
            minibatches: 16,
            epochs: 4,
            clip: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            value_coef: 0.5,
            entropy_coef: 0.0,
            learning_rate: 1e-4,
            num_envs: 16,
            init_log_std: -0.5,
            checkpoint_every: 20,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PpoError> {
        let bad = |m: &str| Err(PpoError::InvalidConfig(m.to_string()));
        if self.batch_size == 0 || self.minibatches == 0 || !self.batch_size.is_multiple_of(self.minibatches) {
            return bad("batch_size must be a positive multiple of minibatches");
        }
        if self.num_envs == 0 || !self.batch_size.is_multiple_of(self.num_envs) {
            return bad("batch_size must be a positive multiple of num_envs");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip >= 0.0) || !(self.learning_rate >= 0.0) || !(self.value_coef >= 0.0) {
            return bad("clip, learning_rate and value_coef must be non-negative");
        }
        if !self.entropy_coef.is_finite() || !self.init_log_std.is_finite() {
            return bad("entropy_coef and init_log_std must be finite");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        Ok(())
    }

    /// Number of rollout/update cycles; the last batch is never partial.
    pub fn num_batches(&self) -> u64 {
        self.total_samples.div_ceil(self.batch_size as u64)
    }
}
