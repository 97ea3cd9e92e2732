//! Episodic decision process over the simulated cluster.
//!
//! Each step is one leadership round: the action scores bias every node's
//! election-timeout window, the current leader is deposed, and the sim runs
//! until the newly elected leader commits its first block. The reward is the
//! negated latency of that block.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::latency::{self, LatencyBreakdown, NodeResources, RoundInput, Shadowing};
use crate::raft::NodeId;
use crate::sim::{ClusterConfig, ClusterSim, FaultSchedule, SimError};
use crate::SimTime;

/// Features per node in the observation.
pub const FEATURES_PER_NODE: usize = 4;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("step called before reset")]
    NotReset,
    #[error("invalid env config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<I> {
    pub state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: I,
}

/// `reset(seed) -> state`, `step(action) -> (state, reward, done)`.
pub trait Environment {
    type Info: Clone;
    type Error: std::error::Error + Send + Sync + 'static;

    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, Self::Error>;
    fn step(&mut self, action: &[f64]) -> Result<Step<Self::Info>, Self::Error>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub epochs_per_episode: usize,
    /// Queue length that maps to 1.0 in the observation.
    pub queue_norm: f64,
    /// Added to the score range so equal scores do not divide by zero.
    pub score_eps: f64,
    /// Reward, in seconds of latency, charged for an epoch that never commits.
    pub stall_penalty_s: f64,
    /// Simulated time a round may take before it counts as stalled.
    pub round_timeout_ms: u64,
    /// Narrowest election window an action can produce. Keeps timeouts
    /// randomized so two top-scored nodes cannot split votes forever.
    pub min_window_ms: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { epochs_per_episode: 100, queue_norm: 50.0, score_eps: 1e-9, stall_penalty_s: 10.0, round_timeout_ms: 10_000, min_window_ms: 5 }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |field, reason: String| Err(EnvError::Config { field, reason });
        if self.epochs_per_episode == 0 {
            return bad("epochs_per_episode", "must be > 0".into());
        }
        if !(self.queue_norm.is_finite() && self.queue_norm > 0.0) {
            return bad("queue_norm", format!("must be finite and > 0, got {}", self.queue_norm));
        }
        if !(self.score_eps.is_finite() && self.score_eps > 0.0) {
            return bad("score_eps", format!("must be finite and > 0, got {}", self.score_eps));
        }
        if !(self.stall_penalty_s.is_finite() && self.stall_penalty_s >= 0.0) {
            return bad("stall_penalty_s", format!("must be finite and >= 0, got {}", self.stall_penalty_s));
        }
        if self.round_timeout_ms == 0 {
            return bad("round_timeout_ms", "must be > 0".into());
        }
        if self.min_window_ms == 0 {
            return bad("min_window_ms", "must be > 0".into());
        }
        Ok(())
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochInfo {
    /// Leader that committed the round's block; `None` when stalled.
    pub leader: Option<NodeId>,
    pub breakdown: LatencyBreakdown<f64>,
    pub stalled: bool,
    /// Elections started during this round.
    pub elections: u64,
    /// Blocks committed during this round, by any leader.
    pub blocks: u64,
    /// Leader queue length when the round's block was migrated.
    pub queue_len: usize,
}

pub struct MecEnv {
    cluster: ClusterConfig,
    config: EnvConfig,
    faults: Option<FaultSchedule>,
    sim: Option<ClusterSim>,
    epoch: usize,
    max_cycles: f64,
    max_distance: f64,
}

impl MecEnv {
    pub fn new(cluster: ClusterConfig, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        cluster.validate()?;
        if cluster.task_rate <= 0.0 {
            return Err(EnvError::Config { field: "task_rate", reason: "rounds need task arrivals; must be > 0".into() });
        }
        let max_cycles = cluster.cycles_per_sec.iter().copied().fold(0.0, f64::max);
        let max_distance = cluster.distances.iter().flatten().copied().fold(0.0, f64::max);
        Ok(MecEnv { cluster, config, faults: None, sim: None, epoch: 0, max_cycles, max_distance })
    }

    /// Injects `schedule` into every fresh episode, relative to its start.
    pub fn with_faults(mut self, schedule: FaultSchedule) -> Self {
        self.faults = Some(schedule);
        self
    }

    pub fn cluster(&self) -> &ClusterConfig {
        &self.cluster
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn node_count(&self) -> usize {
        self.cluster.cluster_size()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn sim(&self) -> Option<&ClusterSim> {
        self.sim.as_ref()
    }

    /// Election window per node for an action: the higher a node's score
    /// relative to the others, the closer its upper bound moves to the
    /// minimum, down to `min_window_ms` above it.
    pub fn election_windows(&self, action: &[f64]) -> Vec<(SimTime, SimTime)> {
        let lo = SimTime::from_millis(self.cluster.election_timeout_min_ms);
        let full = (self.cluster.election_timeout_max_ms - self.cluster.election_timeout_min_ms) as f64 * 1e3;
        let floor = (self.config.min_window_ms as f64 * 1e3).min(full);
        let span = full - floor;
        let min = action.iter().copied().fold(f64::INFINITY, f64::min);
        let max = action.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = max - min + self.config.score_eps;
        action
            .iter()
            .map(|&a| {
                let fraction = (a - min) / range;
                (lo, lo + SimTime((floor + (1.0 - fraction) * span).round() as u64))
            })
            .collect()
    }

    fn observe(&self, sim: &ClusterSim) -> Vec<f64> {
        let leader = sim.leader();
        let geometry = sim.geometry();
        let n = self.node_count();
        let mut state = Vec::with_capacity(FEATURES_PER_NODE * n);
        for (i, res) in sim.resources().iter().enumerate() {
            let id = NodeId(i);
            state.push(res.cycles_per_sec / self.max_cycles);
            state.push((res.queue.len() as f64 / self.config.queue_norm).min(1.0));
            state.push(if self.max_distance > 0.0 { geometry.mean_distance(id) / self.max_distance } else { 0.0 });
            state.push(if leader == Some(id) { 1.0 } else { 0.0 });
        }
        state
    }

    /// Latency of one block per forced leader, with a single queued task and
    /// no shadowing. Independent of the simulator's dynamics.
    pub fn forced_leader_latencies(&self) -> Result<Vec<f64>, EnvError> {
        let geometry = self.cluster.validate()?;
        let resources: Vec<NodeResources<f64>> =
            self.cluster.cycles_per_sec.iter().map(|&c| NodeResources::new(c)).collect();
        let shadowing = Shadowing::none(self.node_count());
        (0..self.node_count())
            .map(|k| {
                let round = RoundInput { leader: NodeId(k), queue_len: 1, tx_count: self.cluster.tx_per_block };
                latency::round_latency(round, &resources, &geometry, &self.cluster.latency, &shadowing)
                    .map(|b| b.total)
                    .map_err(|e| EnvError::Sim(e.into()))
            })
            .collect()
    }

    /// Node with the lowest forced-leader latency; ties go to the lower id.
    pub fn best_leader(&self) -> Result<NodeId, EnvError> {
        let lat = self.forced_leader_latencies()?;
        let best = lat
            .iter()
            .enumerate()
            .fold(0, |best, (k, &v)| if v < lat[best] { k } else { best });
        Ok(NodeId(best))
    }
}

impl Environment for MecEnv {
    type Info = EpochInfo;
    type Error = EnvError;

    fn state_dim(&self) -> usize {
        FEATURES_PER_NODE * self.node_count()
    }

    fn action_dim(&self) -> usize {
        self.node_count()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        let mut sim = ClusterSim::new(self.cluster.clone(), seed)?;
        if let Some(schedule) = &self.faults {
            sim.inject_schedule(schedule, SimTime::ZERO)?;
        }
        self.sim = Some(sim);
        self.epoch = 0;
        Ok(vec![0.0; self.state_dim()])
    }

    fn step(&mut self, action: &[f64]) -> Result<Step<EpochInfo>, EnvError> {
        if action.len() != self.node_count() {
            return Err(EnvError::InvalidAction(format!("{} scores for {} nodes", action.len(), self.node_count())));
        }
        if let Some(i) = action.iter().position(|a| !a.is_finite()) {
            return Err(EnvError::InvalidAction(format!("score {i} is {}", action[i])));
        }
        let windows = self.election_windows(action);
        let mut sim = self.sim.take().ok_or(EnvError::NotReset)?;
        let before = sim.summary();
        let commits_before = sim.commits().len();
        sim.start_leadership_round(&windows)?;
        let boundary = sim.summary().max_term;
        let deadline = sim.now() + SimTime::from_millis(self.config.round_timeout_ms);
        let first_new = |s: &ClusterSim| s.commits()[commits_before..].iter().position(|c| c.term.0 > boundary);
        let outcome = sim.run_until(|s| first_new(s).is_some() || s.now() > deadline);
        let committed = match outcome {
            Ok(_) => first_new(&sim).map(|k| sim.commits()[commits_before + k].clone()),
            Err(SimError::Watchdog { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let after = sim.summary();
        self.epoch += 1;
        let (reward, info) = match committed {
            Some(c) => (
                -c.breakdown.total,
                EpochInfo {
                    leader: Some(c.leader),
                    breakdown: c.breakdown,
                    stalled: false,
                    elections: after.elections - before.elections,
                    blocks: after.blocks_committed - before.blocks_committed,
                    queue_len: c.queue_len,
                },
            ),
            None => (
                -self.config.stall_penalty_s,
                EpochInfo {
                    leader: None,
                    breakdown: LatencyBreakdown::zero(),
                    stalled: true,
                    elections: after.elections - before.elections,
                    blocks: after.blocks_committed - before.blocks_committed,
                    queue_len: 0,
                },
            ),
        };
        let state = self.observe(&sim);
        self.sim = Some(sim);
        let done = !info.stalled && self.epoch >= self.config.epochs_per_episode;
        Ok(Step { state, reward, done, info })
    }
}
