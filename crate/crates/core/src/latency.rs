//! Analytic block latency model: cloud-to-leader migration, block
//! generation, and leader/follower consensus over a shared wireless channel.
//!
//! Everything here is a pure function of its arguments. Shadowing draws are
//! sampled by the simulator and passed in.

use std::collections::VecDeque;
use std::ops::Add;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raft::{BlockPayload, NodeId};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatencyError {
    #[error("invalid latency parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("block of {tx_count} transactions exceeds max_block_txs = {max}")]
    BlockTooLarge { tx_count: u32, max: u32 },
    #[error("a node cannot be its own follower ({0})")]
    SameNode(NodeId),
    #[error("node {node} outside a cluster of {size}")]
    UnknownNode { node: NodeId, size: usize },
    #[error("rate for follower {follower} must be positive, got {rate}")]
    NonPositiveRate { follower: NodeId, rate: f64 },
    #[error("leader has no followers")]
    NoFollowers,
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

/// How many hash operations building a block of N transactions costs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashCount {
    /// N + 2^N - 1
    #[default]
    Exponential,
    /// 2N - 1, a Merkle tree over N leaves.
    Merkle,
}

impl HashCount {
    pub fn count(self, tx_count: u32) -> u64 {
        let n = u64::from(tx_count);
        match self {
            HashCount::Exponential => n + (1u64 << n) - 1,
            HashCount::Merkle => (2 * n).saturating_sub(1),
        }
    }
}

/// Physical constants of the cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LatencyParams<T> {
    /// K, bytes per migrated task.
    pub bytes_per_task: T,
    /// β, cloud-to-edge fiber rate in bytes/s.
    pub fiber_rate: T,
    /// ν, CPU cycles per hash operation.
    pub cycles_per_hash: T,
    /// H, size of an AppendEntries message in bits.
    pub append_entries_bits: T,
    /// U, size of a confirmation message in bits.
    pub confirmation_bits: T,
    /// B, total channel bandwidth in Hz, shared by a leader's followers.
    pub bandwidth_hz: T,
    /// W, transmit power in watts.
    pub tx_power_w: T,
    /// M₀, noise power spectral density in W/Hz.
    pub noise_psd: T,
    /// ϱ, path-loss exponent.
    pub path_loss_exponent: T,
    /// Standard deviation of the log-normal shadowing (log domain).
    pub shadowing_sigma: T,
    pub max_block_txs: u32,
    pub hash_count: HashCount,
}

impl<T: Scalar> Default for LatencyParams<T> {
    fn default() -> Self {
        LatencyParams {
            bytes_per_task: T::lit(500.0),
            fiber_rate: T::lit(1e6),
            cycles_per_hash: T::lit(100.0),
            append_entries_bits: T::lit(1e4),
            confirmation_bits: T::lit(1e4),
            bandwidth_hz: T::lit(1e6),
            tx_power_w: T::lit(1.0),
            // Thermal noise floor, -174 dBm/Hz.
            noise_psd: T::lit(3.981_071_705_534_972e-21),
            path_loss_exponent: T::lit(2.0),
            shadowing_sigma: T::zero(),
            max_block_txs: 24,
            hash_count: HashCount::Exponential,
        }
    }
}

impl<T: Scalar> LatencyParams<T> {
    pub fn validate(&self) -> Result<(), LatencyError> {
        let positive = [
            ("bytes_per_task", self.bytes_per_task),
            ("fiber_rate", self.fiber_rate),
            ("cycles_per_hash", self.cycles_per_hash),
            ("append_entries_bits", self.append_entries_bits),
            ("confirmation_bits", self.confirmation_bits),
            ("bandwidth_hz", self.bandwidth_hz),
            ("tx_power_w", self.tx_power_w),
            ("noise_psd", self.noise_psd),
            ("path_loss_exponent", self.path_loss_exponent),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > T::zero()) {
                return Err(LatencyError::InvalidParam { field, reason: format!("must be finite and > 0, got {v}") });
            }
        }
        if !(self.shadowing_sigma.is_finite() && self.shadowing_sigma >= T::zero()) {
            return Err(LatencyError::InvalidParam {
                field: "shadowing_sigma",
                reason: format!("must be finite and >= 0, got {}", self.shadowing_sigma),
            });
        }
        if self.max_block_txs > 60 {
            return Err(LatencyError::InvalidParam {
                field: "max_block_txs",
                reason: format!("2^N must stay exact in u64, got {}", self.max_block_txs),
            });
        }
        Ok(())
    }
}

/// Compute capacity and pending work of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResources<T> {
    /// ι, CPU cycles per second.
    pub cycles_per_sec: T,
    /// Z, tasks delivered to this node and not yet committed.
    pub queue: VecDeque<BlockPayload>,
}

impl<T: Scalar> NodeResources<T> {
    pub fn new(cycles_per_sec: T) -> Self {
        NodeResources { cycles_per_sec, queue: VecDeque::new() }
    }
}

/// Pairwise leader/follower distances in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterGeometry<T> {
    distances: Vec<Vec<T>>,
}

impl<T: Scalar> ClusterGeometry<T> {
    pub fn new(distances: Vec<Vec<T>>) -> Result<Self, LatencyError> {
        let n = distances.len();
        for (i, row) in distances.iter().enumerate() {
            if row.len() != n {
                return Err(LatencyError::Geometry(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            for (j, &d) in row.iter().enumerate() {
                if i == j {
                    if d != T::zero() {
                        return Err(LatencyError::Geometry(format!("d[{i}][{i}] must be 0, got {d}")));
                    }
                } else if !(d.is_finite() && d > T::zero()) {
                    return Err(LatencyError::Geometry(format!("d[{i}][{j}] must be finite and > 0, got {d}")));
                } else if d != distances[j][i] {
                    return Err(LatencyError::Geometry(format!("d[{i}][{j}] != d[{j}][{i}]")));
                }
            }
        }
        Ok(ClusterGeometry { distances })
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    /// F_l: every other node follows the leader.
    pub fn follower_count(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> T {
        self.distances[a.0][b.0]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.distances
    }

    /// Mean distance from `node` to its peers, 0 for a single node.
    pub fn mean_distance(&self, node: NodeId) -> T {
        let n = self.len();
        if n < 2 {
            return T::zero();
        }
        let sum: T = self.distances[node.0].iter().copied().sum();
        sum / T::from_usize(n - 1).unwrap()
    }

    fn check(&self, node: NodeId) -> Result<(), LatencyError> {
        if node.0 < self.len() {
            Ok(())
        } else {
            Err(LatencyError::UnknownNode { node, size: self.len() })
        }
    }
}

/// Per-link multiplicative shadowing factors Υ for one round; symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shadowing<T> {
    factors: Vec<Vec<T>>,
}

impl<T: Scalar> Shadowing<T> {
    /// Υ ≡ 1 on every link.
    pub fn none(n: usize) -> Self {
        Shadowing { factors: vec![vec![T::one(); n]; n] }
    }

    /// Builds from the upper triangle produced by `draw(i, j)` for `i < j`.
    pub fn from_fn(n: usize, mut draw: impl FnMut(usize, usize) -> T) -> Self {
        let mut factors = vec![vec![T::one(); n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = draw(i, j);
                factors[i][j] = v;
                factors[j][i] = v;
            }
        }
        Shadowing { factors }
    }

    pub fn factor(&self, a: NodeId, b: NodeId) -> T {
        self.factors[a.0][b.0]
    }
}

/// Latency of one block round, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown<T> {
    /// Cloud-to-leader task migration.
    pub migration: T,
    /// Block generation on the leader.
    pub block_generation: T,
    /// Leader-to-quorum replication and confirmation.
    pub consensus: T,
    pub total: T,
}

impl<T: Scalar> LatencyBreakdown<T> {
    pub fn new(migration: T, block_generation: T, consensus: T) -> Self {
        LatencyBreakdown { migration, block_generation, consensus, total: migration + block_generation + consensus }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn scale(self, k: T) -> Self {
        Self::new(self.migration * k, self.block_generation * k, self.consensus * k)
    }
}

impl<T: Scalar> Add for LatencyBreakdown<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(
            self.migration + rhs.migration,
            self.block_generation + rhs.block_generation,
            self.consensus + rhs.consensus,
        )
    }
}

/// Time to move `queue_len` tasks from the cloud to the leader: |Z|·K / β.
pub fn migration_latency<T: Scalar>(queue_len: usize, params: &LatencyParams<T>) -> T {
    T::from_usize(queue_len).unwrap() * params.bytes_per_task / params.fiber_rate
}

/// Time for the leader to build a block: (N + 2^N - 1)·ν / ι.
pub fn block_generation_latency<T: Scalar>(
    tx_count: u32,
    node: &NodeResources<T>,
    params: &LatencyParams<T>,
) -> Result<T, LatencyError> {
    if tx_count > params.max_block_txs {
        return Err(LatencyError::BlockTooLarge { tx_count, max: params.max_block_txs });
    }
    let hashes = T::from_u64(params.hash_count.count(tx_count)).unwrap();
    Ok(hashes * params.cycles_per_hash / node.cycles_per_sec)
}

/// Received signal-to-noise ratio on a link: W·d^(-ϱ)·Υ / (B·M₀).
pub fn snr<T: Scalar>(
    leader: NodeId,
    follower: NodeId,
    geometry: &ClusterGeometry<T>,
    params: &LatencyParams<T>,
    shadowing: T,
) -> Result<T, LatencyError> {
    geometry.check(leader)?;
    geometry.check(follower)?;
    if leader == follower {
        return Err(LatencyError::SameNode(leader));
    }
    let d = geometry.distance(leader, follower);
    Ok(params.tx_power_w * d.powf(-params.path_loss_exponent) * shadowing / (params.bandwidth_hz * params.noise_psd))
}

/// Shannon rate with the bandwidth split across `followers`: (B/F)·log₂(1+ρ).
pub fn rate_from_snr<T: Scalar>(rho: T, followers: usize, params: &LatencyParams<T>) -> Result<T, LatencyError> {
    if followers == 0 {
        return Err(LatencyError::NoFollowers);
    }
    Ok(params.bandwidth_hz / T::from_usize(followers).unwrap() * rho.ln_1p() / T::LN_2())
}

/// Link rate in bits/s between `leader` and `follower`.
pub fn link_rate<T: Scalar>(
    leader: NodeId,
    follower: NodeId,
    geometry: &ClusterGeometry<T>,
    params: &LatencyParams<T>,
    shadowing: T,
) -> Result<T, LatencyError> {
    let rho = snr(leader, follower, geometry, params, shadowing)?;
    rate_from_snr(rho, geometry.follower_count(), params)
}

/// Downlink and uplink rate between a leader and one follower.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerRates<T> {
    pub follower: NodeId,
    /// Leader to follower, bits/s.
    pub downlink: T,
    /// Follower to leader, bits/s.
    pub uplink: T,
}

/// Picks the follower that completes the quorum: sorted by downlink rate,
/// fastest first, the one at position ⌊F/2⌋.
pub fn quorum_follower<T: Scalar>(rates: &[FollowerRates<T>]) -> Result<FollowerRates<T>, LatencyError> {
    if rates.is_empty() {
        return Err(LatencyError::NoFollowers);
    }
    for r in rates {
        for rate in [r.downlink, r.uplink] {
            if !(rate > T::zero()) {
                return Err(LatencyError::NonPositiveRate { follower: r.follower, rate: rate.as_f64() });
            }
        }
    }
    let mut sorted = rates.to_vec();
    // Ties resolved by node id so the choice is independent of input order.
    sorted.sort_by(|a, b| b.downlink.partial_cmp(&a.downlink).unwrap().then(a.follower.cmp(&b.follower)));
    Ok(sorted[rates.len() / 2])
}

/// Round consensus latency: H / R_down + U / R_up for the quorum-completing follower.
pub fn consensus_latency<T: Scalar>(rates: &[FollowerRates<T>], params: &LatencyParams<T>) -> Result<T, LatencyError> {
    let z = quorum_follower(rates)?;
    Ok(params.append_entries_bits / z.downlink + params.confirmation_bits / z.uplink)
}

/// Rates from `leader` to each of its followers under one shadowing draw.
/// The channel is symmetric, so uplink equals downlink.
pub fn follower_rates<T: Scalar>(
    leader: NodeId,
    geometry: &ClusterGeometry<T>,
    params: &LatencyParams<T>,
    shadowing: &Shadowing<T>,
) -> Result<Vec<FollowerRates<T>>, LatencyError> {
    geometry.check(leader)?;
    (0..geometry.len())
        .map(NodeId)
        .filter(|&f| f != leader)
        .map(|f| {
            let r = link_rate(leader, f, geometry, params, shadowing.factor(leader, f))?;
            Ok(FollowerRates { follower: f, downlink: r, uplink: r })
        })
        .collect()
}

/// What a single block round looks like from the latency model's side.
#[derive(Debug, Clone, Copy)]
pub struct RoundInput {
    pub leader: NodeId,
    /// Tasks queued at the leader when this block's task was migrated.
    pub queue_len: usize,
    pub tx_count: u32,
}

/// Migration + block generation + consensus for one committed block.
pub fn round_latency<T: Scalar>(
    round: RoundInput,
    resources: &[NodeResources<T>],
    geometry: &ClusterGeometry<T>,
    params: &LatencyParams<T>,
    shadowing: &Shadowing<T>,
) -> Result<LatencyBreakdown<T>, LatencyError> {
    geometry.check(round.leader)?;
    let node = resources
        .get(round.leader.0)
        .ok_or(LatencyError::UnknownNode { node: round.leader, size: resources.len() })?;
    let migration = migration_latency(round.queue_len, params);
    let block_generation = block_generation_latency(round.tx_count, node, params)?;
    let consensus = if geometry.follower_count() == 0 {
        T::zero()
    } else {
        consensus_latency(&follower_rates(round.leader, geometry, params, shadowing)?, params)?
    };
    Ok(LatencyBreakdown::new(migration, block_generation, consensus))
}
