use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::latency::{ClusterGeometry, LatencyParams};
use crate::raft::{CommitRule, RaftConfig};
use crate::SimTime;

use super::SimError;

/// Everything needed to build a [`ClusterSim`](super::ClusterSim).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub election_timeout_min_ms: u64,
    pub election_timeout_max_ms: u64,
    pub heartbeat_ms: u64,
    /// ι per node, cycles/s. Its length fixes the cluster size.
    pub cycles_per_sec: Vec<f64>,
    /// Symmetric distance matrix in meters.
    pub distances: Vec<Vec<f64>>,
    pub latency: LatencyParams<f64>,
    /// Poisson rate of cloud task arrivals, tasks/s. Zero disables arrivals.
    pub task_rate: f64,
    /// Transactions per block.
    pub tx_per_block: u32,
    /// Events one `run_until` call may process before giving up.
    pub max_events: u64,
    pub commit_rule: CommitRule,
}

/// Ranges used to draw a random heterogeneous cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyRanges {
    pub cycles_min: f64,
    pub cycles_max: f64,
    pub distance_min: f64,
    pub distance_max: f64,
}

impl Default for TopologyRanges {
    fn default() -> Self {
        TopologyRanges { cycles_min: 1e9, cycles_max: 4e9, distance_min: 50.0, distance_max: 500.0 }
    }
}

impl TopologyRanges {
    /// Draws per-node ι and a symmetric distance matrix from `seed`.
    pub fn draw(&self, n: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cycles = (0..n).map(|_| rng.random_range(self.cycles_min..=self.cycles_max)).collect();
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = rng.random_range(self.distance_min..=self.distance_max);
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        (cycles, d)
    }
}

impl ClusterConfig {
    /// A cluster of `n` nodes with ι and distances drawn from `topology_seed`.
    pub fn generated(n: usize, topology_seed: u64) -> Self {
        let (cycles_per_sec, distances) = TopologyRanges::default().draw(n, topology_seed);
        ClusterConfig {
            election_timeout_min_ms: 150,
            election_timeout_max_ms: 300,
            heartbeat_ms: 50,
            cycles_per_sec,
            distances,
            latency: LatencyParams::default(),
            task_rate: 20.0,
            tx_per_block: 16,
            max_events: 10_000_000,
            commit_rule: CommitRule::CurrentTermQuorum,
        }
    }

    pub fn cluster_size(&self) -> usize {
        self.cycles_per_sec.len()
    }

    pub fn raft_config(&self) -> RaftConfig {
        RaftConfig {
            cluster_size: self.cluster_size(),
            election_timeout_min: SimTime::from_millis(self.election_timeout_min_ms),
            election_timeout_max: SimTime::from_millis(self.election_timeout_max_ms),
            heartbeat_interval: SimTime::from_millis(self.heartbeat_ms),
            commit_rule: self.commit_rule,
            max_entries_per_append: 64,
        }
    }

    pub fn validate(&self) -> Result<ClusterGeometry<f64>, SimError> {
        let bad = |field: &str, reason: String| SimError::Config { field: field.to_string(), reason };
        let n = self.cluster_size();
        if n == 0 {
            return Err(bad("cycles_per_sec", "cluster needs at least one node".into()));
        }
        if let Some((i, v)) = self.cycles_per_sec.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(bad("cycles_per_sec", format!("node {i}: must be finite and > 0, got {v}")));
        }
        if self.election_timeout_min_ms == 0 {
            return Err(bad("election_timeout_min_ms", "must be > 0".into()));
        }
        if self.election_timeout_max_ms < self.election_timeout_min_ms {
            return Err(bad(
                "election_timeout_max_ms",
                format!("{} < election_timeout_min_ms {}", self.election_timeout_max_ms, self.election_timeout_min_ms),
            ));
        }
        if self.heartbeat_ms == 0 || self.heartbeat_ms >= self.election_timeout_min_ms {
            return Err(bad("heartbeat_ms", format!("must be in (0, election_timeout_min_ms), got {}", self.heartbeat_ms)));
        }
        if !(self.task_rate.is_finite() && self.task_rate >= 0.0) {
            return Err(bad("task_rate", format!("must be finite and >= 0, got {}", self.task_rate)));
        }
        if self.max_events == 0 {
            return Err(bad("max_events", "must be > 0".into()));
        }
        self.latency.validate().map_err(|e| bad("latency", e.to_string()))?;
        if self.tx_per_block > self.latency.max_block_txs {
            return Err(bad(
                "tx_per_block",
                format!("{} exceeds max_block_txs {}", self.tx_per_block, self.latency.max_block_txs),
            ));
        }
        if self.distances.len() != n {
            return Err(bad("distances", format!("{} rows for {n} nodes", self.distances.len())));
        }
        ClusterGeometry::new(self.distances.clone()).map_err(|e| bad("distances", e.to_string()))
    }
}
