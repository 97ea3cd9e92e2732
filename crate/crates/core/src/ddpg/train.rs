use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::agent::{act, actor_update, critic_update, refine_action, soft_update, AgentNets, Sgd};
use super::replay::{ExperienceDeque, Transition};
use super::{AgentConfig, AgentError};
use crate::env::Environment;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub agent: AgentConfig,
    pub episodes: usize,
    /// Hard cap on steps in one episode, for environments that keep stalling.
    pub max_episode_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { agent: AgentConfig::default(), episodes: 500, max_episode_steps: 10_000 }
    }
}

#[derive(Debug, Error)]
pub enum TrainError<E: std::error::Error + 'static> {
    #[error("agent: {0} (epoch {epoch})", epoch = .1)]
    Agent(AgentError, u64),
    #[error("environment: {0}")]
    Env(#[source] E),
}

/// One decision epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog<I> {
    /// Global epoch counter, starting at 1.
    pub epoch: u64,
    pub episode: usize,
    pub reward: f64,
    /// Critic loss and mean Q of the update made after this epoch, if any.
    pub critic_loss: Option<f64>,
    pub mean_q: Option<f64>,
    /// Critic values of the executed (refined) and unrefined actions.
    pub refined_q: f64,
    pub base_q: f64,
    pub done: bool,
    pub info: I,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T, I> {
    pub nets: AgentNets<T>,
    pub log: Vec<EpochLog<I>>,
    pub replay: ExperienceDeque<T>,
}

/// SplitMix64 finalizer over `base ^ stream·φ`; decorrelates sub-seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const AGENT_STREAM: u64 = u64::MAX;

fn to_scalar<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

/// Runs the DDPG loop for `config.episodes` episodes. Episode `k` resets the
/// env with `derive_seed(seed, k)`; the agent's own randomness comes from a
/// separate stream of the same seed.
pub fn train<T: Scalar, E: Environment>(
    env: &mut E,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<T, E::Info>, TrainError<E::Error>> {
    let cfg = &config.agent;
    cfg.validate().map_err(|e| TrainError::Agent(e, 0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, AGENT_STREAM));
    let mut nets = AgentNets::<T>::new(env.state_dim(), env.action_dim(), &cfg.hidden, &mut rng);
    let mut replay = ExperienceDeque::new(cfg.replay_capacity);
    let mut opt = Sgd;
    let (noise, radius) = (T::lit(cfg.noise_std), T::lit(cfg.refine_radius));
    let (critic_lr, actor_lr, discount, keep) =
        (T::lit(cfg.critic_lr), T::lit(cfg.actor_lr), T::lit(cfg.discount), T::lit(cfg.soft_update));
    let mut log = Vec::new();
    let mut epoch = 0u64;
    for episode in 0..config.episodes {
        let mut state: Vec<T> = to_scalar(&env.reset(derive_seed(seed, episode as u64)).map_err(TrainError::Env)?);
        for step_in_episode in 0.. {
            if step_in_episode == config.max_episode_steps {
                warn!("episode {episode} hit the step cap of {}", config.max_episode_steps);
                break;
            }
            let agent_err = |e| TrainError::Agent(e, epoch + 1);
            let base = act(&nets, &state, noise, &mut rng).map_err(agent_err)?;
            let refined =
                refine_action(&nets, &state, &base, radius, cfg.refine_candidates, &mut rng).map_err(agent_err)?;
            let action: Vec<f64> = refined.action.iter().map(|v| v.as_f64()).collect();
            let step = env.step(&action).map_err(TrainError::Env)?;
            let next_state: Vec<T> = to_scalar(&step.state);
            replay.push(Transition {
                state: std::mem::replace(&mut state, next_state.clone()),
                action: refined.action,
                reward: T::lit(step.reward * cfg.reward_scale),
                next_state,
            });
            epoch += 1;
            let mut entry = EpochLog {
                epoch,
                episode,
                reward: step.reward,
                critic_loss: None,
                mean_q: None,
                refined_q: refined.q.as_f64(),
                base_q: refined.base_q.as_f64(),
                done: step.done,
                info: step.info,
            };
            if epoch > cfg.warmup {
                let agent_err = |e| TrainError::Agent(e, epoch);
                let batch = replay.sample(cfg.batch_size, &mut rng);
                let loss = critic_update(&mut nets, &batch, critic_lr, discount, &mut opt).map_err(agent_err)?;
                let q = actor_update(&mut nets, &batch, actor_lr, &mut opt).map_err(agent_err)?;
                soft_update(&mut nets, keep).map_err(agent_err)?;
                entry.critic_loss = Some(loss.as_f64());
                entry.mean_q = Some(q.as_f64());
            }
            log.push(entry);
            if step.done {
                break;
            }
        }
    }
    Ok(TrainOutcome { nets, log, replay })
}
