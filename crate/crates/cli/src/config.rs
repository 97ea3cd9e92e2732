//! Run configuration: one TOML file, every field optional, unknown keys rejected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use edgeraft_core::ddpg::AgentConfig;
use edgeraft_core::env::EnvConfig;
use edgeraft_core::latency::LatencyParams;
use edgeraft_core::sim::campaign::CampaignConfig;
use edgeraft_core::sim::{ClusterConfig, FaultSchedule, TopologyRanges};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    pub nodes: usize,
    /// Seed for drawing per-node cycles and distances when not given explicitly.
    pub topology_seed: u64,
    pub election_timeout_min_ms: u64,
    pub election_timeout_max_ms: u64,
    pub heartbeat_ms: u64,
    pub task_rate: f64,
    pub tx_per_block: u32,
    pub max_events: u64,
    /// Explicit per-node cycles/s; drawn from `topology_seed` when empty.
    pub cycles_per_sec: Vec<f64>,
    /// Explicit distance matrix in meters; drawn from `topology_seed` when empty.
    pub distances: Vec<Vec<f64>>,
}

impl Default for ClusterSection {
    fn default() -> Self {
        let base = ClusterConfig::generated(0, 0);
        ClusterSection {
            nodes: 4,
            topology_seed: 7,
            election_timeout_min_ms: base.election_timeout_min_ms,
            election_timeout_max_ms: base.election_timeout_max_ms,
            heartbeat_ms: base.heartbeat_ms,
            task_rate: base.task_rate,
            tx_per_block: base.tx_per_block,
            max_events: base.max_events,
            cycles_per_sec: Vec::new(),
            distances: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub episodes: usize,
    /// Safety cap on epochs in one episode when rounds keep stalling.
    pub max_episode_steps: usize,
    pub out_dir: PathBuf,
    /// TOML fault schedule injected at the start of every episode; empty for none.
    pub fault_schedule: PathBuf,
    pub moving_average_window: usize,
    pub histogram_bins: usize,
    pub precision: Precision,
    pub cluster: ClusterSection,
    pub latency: LatencyParams<f64>,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub raft_check: CampaignConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            trials: 10,
            episodes: 500,
            max_episode_steps: 10_000,
            out_dir: PathBuf::from("runs"),
            fault_schedule: PathBuf::new(),
            moving_average_window: 20,
            histogram_bins: 20,
            precision: Precision::F64,
            cluster: ClusterSection::default(),
            latency: LatencyParams::default(),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            raft_check: CampaignConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow::anyhow!("{}", e.message().trim()).context(location(text, e.span())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies overrides, fills the topology in explicitly and validates.
    pub fn resolve(mut self, overrides: &Overrides) -> Result<Self> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(trials) = overrides.trials {
            self.trials = trials;
        }
        if let Some(out) = &overrides.out_dir {
            self.out_dir = out.clone();
        }
        let c = &mut self.cluster;
        if c.cycles_per_sec.is_empty() != c.distances.is_empty() {
            bail!("config field `cluster`: give both cycles_per_sec and distances, or neither");
        }
        if c.cycles_per_sec.is_empty() {
            let (cycles, distances) = TopologyRanges::default().draw(c.nodes, c.topology_seed);
            c.cycles_per_sec = cycles;
            c.distances = distances;
        } else if c.cycles_per_sec.len() != c.nodes {
            bail!("config field `cluster.cycles_per_sec`: {} entries for {} nodes", c.cycles_per_sec.len(), c.nodes);
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("config field `trials`: must be > 0");
        }
        if self.episodes == 0 {
            bail!("config field `episodes`: must be > 0");
        }
        if self.max_episode_steps == 0 {
            bail!("config field `max_episode_steps`: must be > 0");
        }
        if self.moving_average_window == 0 {
            bail!("config field `moving_average_window`: must be > 0");
        }
        if self.histogram_bins == 0 {
            bail!("config field `histogram_bins`: must be > 0");
        }
        self.cluster_config().validate()?;
        self.env.validate()?;
        self.agent.validate()?;
        if self.raft_check.cluster_sizes.contains(&0) {
            bail!("config field `raft_check.cluster_sizes`: sizes must be > 0");
        }
        Ok(())
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        let c = &self.cluster;
        ClusterConfig {
            election_timeout_min_ms: c.election_timeout_min_ms,
            election_timeout_max_ms: c.election_timeout_max_ms,
            heartbeat_ms: c.heartbeat_ms,
            cycles_per_sec: c.cycles_per_sec.clone(),
            distances: c.distances.clone(),
            latency: self.latency.clone(),
            task_rate: c.task_rate,
            tx_per_block: c.tx_per_block,
            max_events: c.max_events,
            commit_rule: Default::default(),
        }
    }

    pub fn faults(&self) -> Result<Option<FaultSchedule>> {
        if self.fault_schedule.as_os_str().is_empty() {
            return Ok(None);
        }
        let path = &self.fault_schedule;
        let text = fs::read_to_string(path).with_context(|| format!("reading fault schedule {}", path.display()))?;
        let raw: FaultSchedule =
            toml::from_str(&text).with_context(|| format!("parsing fault schedule {}", path.display()))?;
        Ok(Some(FaultSchedule::new(raw.directives, self.cluster.nodes)?))
    }

    /// Canonical TOML of the fully resolved config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// SHA-256 of the resolved TOML with `out_dir` blanked, hex encoded, so
    /// the same experiment hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { out_dir: PathBuf::new(), ..self.clone() };
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }
}

fn location(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(span) => {
            let line = text[..span.start.min(text.len())].lines().count().max(1);
            format!("at line {line}")
        }
        None => "in config".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[agent]\nlearning_rate = 0.1").is_err());
        assert!(RunConfig::from_toml("[latency]\nnoise = 1.0").is_err());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = RunConfig::from_toml("[agent]\nactor_lr = 0.01\n[latency]\nfiber_rate = 2e6").unwrap();
        assert_eq!(c.agent.actor_lr, 0.01);
        assert_eq!(c.agent.critic_lr, AgentConfig::default().critic_lr);
        assert_eq!(c.latency.fiber_rate, 2e6);
        assert_eq!(c.latency.bytes_per_task, LatencyParams::<f64>::default().bytes_per_task);
    }

    #[test]
    fn resolved_config_round_trips_and_hash_is_stable() {
        let c = RunConfig::default().resolve(&Overrides { seed: Some(9), ..Overrides::default() }).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.cluster.cycles_per_sec.len(), 4);
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.resolve(&Overrides::default()).unwrap().hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let moved = RunConfig { out_dir: PathBuf::from("elsewhere"), ..c.clone() };
        assert_eq!(moved.hash(), c.hash());
        let reseeded = RunConfig { seed: 10, ..c.clone() };
        assert_ne!(reseeded.hash(), c.hash());
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = RunConfig::from_toml("trials = 0").unwrap().resolve(&Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("trials"), "{err}");
        let err = RunConfig::from_toml("[agent]\ndiscount = 1.5").unwrap().resolve(&Overrides::default()).unwrap_err();
        assert!(format!("{err:#}").contains("discount"), "{err:#}");
        let err = RunConfig::from_toml("[cluster]\nnodes = 3\ncycles_per_sec = [1e9]").unwrap().resolve(&Overrides::default());
        assert!(err.is_err());
    }
}
