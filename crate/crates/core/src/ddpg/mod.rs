//! Actor-critic DDPG with hand-written backprop.

mod agent;
pub mod checkpoint;
mod mlp;
mod replay;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{act, actor_update, critic_update, refine_action, soft_update, AgentNets, Optimizer, Refinement, Sgd};
pub use mlp::{Activation, Backward, ForwardCache, Gradients, Layer, Mlp};
pub use replay::{ExperienceDeque, Transition};
pub use train::{derive_seed, train, EpochLog, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("forward cache does not belong to this network")]
    CacheMismatch,
    #[error("bad network shape: {0}")]
    Shape(String),
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid agent config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
}

/// Hyperparameters. Widths in `hidden` apply to both actor and critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub discount: f64,
    /// Weight kept by the target on each soft update.
    pub soft_update: f64,
    pub noise_std: f64,
    /// Epochs collected before the first network update.
    pub warmup: u64,
    pub batch_size: usize,
    pub refine_radius: f64,
    pub refine_candidates: usize,
    pub replay_capacity: usize,
    pub hidden: Vec<usize>,
    /// Multiplies rewards before they enter the deque; logs keep raw rewards.
    pub reward_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            critic_lr: 1e-3,
            actor_lr: 1e-4,
            discount: 0.99,
            soft_update: 0.995,
            noise_std: 0.1,
            warmup: 64,
            batch_size: 64,
            refine_radius: 0.2,
            refine_candidates: 16,
            replay_capacity: 100_000,
            hidden: vec![64, 64],
            reward_scale: 1.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |field, reason: String| Err(AgentError::Config { field, reason });
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if !open_unit(self.critic_lr) {
            return bad("critic_lr", format!("must be in (0, 1), got {}", self.critic_lr));
        }
        if !open_unit(self.actor_lr) {
            return bad("actor_lr", format!("must be in (0, 1), got {}", self.actor_lr));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount", format!("must be in [0, 1), got {}", self.discount));
        }
        if !(self.soft_update > 0.0 && self.soft_update <= 1.0) {
            return bad("soft_update", format!("must be in (0, 1], got {}", self.soft_update));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std", format!("must be finite and >= 0, got {}", self.noise_std));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad("reward_scale", format!("must be finite and > 0, got {}", self.reward_scale));
        }
        if !(self.refine_radius.is_finite() && self.refine_radius >= 0.0) {
            return bad("refine_radius", format!("must be finite and >= 0, got {}", self.refine_radius));
        }
        for (field, v) in [
            ("batch_size", self.batch_size),
            ("refine_candidates", self.refine_candidates),
            ("replay_capacity", self.replay_capacity),
        ] {
            if v == 0 {
                return bad(field, "must be > 0".into());
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", format!("need at least one positive width, got {:?}", self.hidden));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
