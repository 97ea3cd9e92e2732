//! Randomized fault campaigns for checking Raft safety.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClusterConfig, ClusterSim, Fault, FaultDirective, FaultSchedule, RunSummary, SimError, TraceSink};
use crate::raft::{CommitRule, Violation};
use crate::SimTime;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub cluster_sizes: Vec<usize>,
    /// Runs per cluster size.
    pub runs: u64,
    /// Faults are drawn in `[0, fault_window_ms)`; everything heals at its end.
    pub fault_window_ms: u64,
    /// Total simulated time per run.
    pub horizon_ms: u64,
    /// Weight crashes and recoveries over partitions.
    pub crash_heavy: bool,
    pub commit_rule: CommitRule,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            cluster_sizes: vec![3, 5, 7],
            runs: 334,
            fault_window_ms: 3_000,
            horizon_ms: 4_000,
            crash_heavy: false,
            commit_rule: CommitRule::CurrentTermQuorum,
        }
    }
}

/// Random crash/recover/partition/heal schedule in which at most
/// ⌊(n−1)/2⌋ nodes are crashed or cut off at any instant.
pub fn random_fault_schedule<R: Rng + ?Sized>(n: usize, window_ms: u64, crash_heavy: bool, rng: &mut R) -> FaultSchedule {
    let budget = (n.saturating_sub(1)) / 2;
    let mut crashed: BTreeSet<usize> = BTreeSet::new();
    let mut isolated: BTreeSet<usize> = BTreeSet::new();
    let mut directives = Vec::new();
    let mut t = 0u64;
    let weights: [u32; 4] = if crash_heavy { [5, 3, 1, 1] } else { [1, 1, 1, 1] };
    loop {
        t += rng.random_range(50..=400);
        if t >= window_ms {
            break;
        }
        let down: BTreeSet<usize> = crashed.union(&isolated).copied().collect();
        let mut options: Vec<(u8, u32)> = Vec::new();
        if down.len() < budget {
            options.push((0, weights[0]));
        }
        if !crashed.is_empty() {
            options.push((1, weights[1]));
        }
        if budget > 0 {
            options.push((2, weights[2]));
        }
        if !isolated.is_empty() {
            options.push((3, weights[3]));
        }
        let Ok(&(choice, _)) = options.choose_weighted(rng, |o| o.1) else { continue };
        let fault = match choice {
            0 => {
                let up: Vec<usize> = (0..n).filter(|i| !down.contains(i)).collect();
                let node = *up.choose(rng).unwrap();
                crashed.insert(node);
                Fault::Crash { node }
            }
            1 => {
                let node = *crashed.iter().collect::<Vec<_>>().choose(rng).copied().unwrap();
                crashed.remove(&node);
                Fault::Recover { node }
            }
            2 => {
                // Isolate a fresh group, keeping crashed ∪ group within budget.
                let room = budget - crashed.len();
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(rng);
                let size = rng.random_range(1..=budget);
                let mut group = BTreeSet::new();
                for node in order {
                    if group.len() == size {
                        break;
                    }
                    let extra = usize::from(!crashed.contains(&node));
                    let used = group.iter().filter(|g| !crashed.contains(g)).count();
                    if used + extra <= room {
                        group.insert(node);
                    }
                }
                isolated = group;
                Fault::Partition { links: cut_between(&isolated, n) }
            }
            _ => {
                isolated.clear();
                Fault::heal()
            }
        };
        directives.push(FaultDirective { at_ms: t, fault });
    }
    if !isolated.is_empty() {
        directives.push(FaultDirective { at_ms: window_ms, fault: Fault::heal() });
    }
    for node in crashed {
        directives.push(FaultDirective { at_ms: window_ms, fault: Fault::Recover { node } });
    }
    FaultSchedule::new(directives, n).expect("generated schedule is well formed")
}

fn cut_between(group: &BTreeSet<usize>, n: usize) -> Vec<[usize; 2]> {
    group
        .iter()
        .flat_map(|&a| (0..n).filter(|b| !group.contains(b)).map(move |b| [a.min(b), a.max(b)]))
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub cluster_size: usize,
    pub seed: u64,
    pub violations: Vec<Violation>,
    pub summary: RunSummary,
    pub schedule: FaultSchedule,
}

/// Cluster for one campaign run: `base` with its topology redrawn for `n`
/// nodes from `seed`.
pub fn campaign_cluster(base: &ClusterConfig, n: usize, seed: u64, commit_rule: CommitRule) -> ClusterConfig {
    let generated = ClusterConfig::generated(n, seed);
    ClusterConfig {
        cycles_per_sec: generated.cycles_per_sec,
        distances: generated.distances,
        commit_rule,
        ..base.clone()
    }
}

/// One seeded run under a random fault schedule, traced into `sink`.
pub fn check_run_with<S: TraceSink>(
    base: &ClusterConfig,
    n: usize,
    seed: u64,
    config: &CampaignConfig,
    sink: S,
) -> Result<(RunReport, S), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = random_fault_schedule(n, config.fault_window_ms, config.crash_heavy, &mut rng);
    let cluster = campaign_cluster(base, n, seed, config.commit_rule);
    let mut sim = ClusterSim::with_sink(cluster, seed, sink)?;
    sim.inject_schedule(&schedule, SimTime::ZERO)?;
    sim.run_until_time(SimTime::from_millis(config.horizon_ms))?;
    sim.check_logs();
    let report = RunReport {
        cluster_size: n,
        seed,
        violations: sim.monitor().violations().to_vec(),
        summary: sim.summary(),
        schedule,
    };
    Ok((report, sim.into_sink()))
}

pub fn check_run(base: &ClusterConfig, n: usize, seed: u64, config: &CampaignConfig) -> Result<RunReport, SimError> {
    check_run_with(base, n, seed, config, super::NullSink).map(|(r, _)| r)
}
