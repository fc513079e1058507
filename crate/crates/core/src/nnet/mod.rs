//! Q-network: convolutional feature extractor over the map input, dense
//! head with the time scalar appended, double-DQN training.

mod adam;
mod checkpoint;
mod ddqn;
mod denormal;
mod linalg;
mod network;
mod policy;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use ddqn::{ddqn_target, ddqn_targets_from_q, soft_update, train_step, TransitionBatch};
pub use denormal::FlushDenormals;
pub use linalg::{gemm, Real};
pub use network::{Architecture, BatchInput, ConvSpec, InputShape, NetParams, QNetwork, Tape};
pub use policy::{greedy_action, greedy_index, softmax_index, softmax_probs, softmax_sample, QValues};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training diverged: loss is {0}")]
    Diverged(f64),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Learning hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Soft-max temperature of the exploration policy.
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Soft target-update rate.
    pub tau: f64,
    pub replay_capacity: usize,
    /// Transitions required before learning starts; defaults to the batch size.
    pub warmup: Option<usize>,
    pub total_steps: u64,
    /// A greedy evaluation episode runs after every this many training episodes.
    pub eval_every: u64,
    /// Width of the step bins used for reporting.
    pub bin_width: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.95,
            temperature: 0.1,
            learning_rate: 1e-4,
            batch_size: 128,
            tau: 0.005,
            replay_capacity: 50_000,
            warmup: None,
            total_steps: 150_000,
            eval_every: 10,
            bin_width: 5_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: &str| Err(NetError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.replay_capacity == 0 {
            return bad("replay_capacity must be positive");
        }
        if self.eval_every == 0 || self.bin_width == 0 {
            return bad("eval_every and bin_width must be positive");
        }
        Ok(())
    }

    pub fn warmup_len(&self) -> usize {
        self.warmup.unwrap_or(self.batch_size).max(1)
    }
}
