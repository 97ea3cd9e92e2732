//! Per-episode aggregation and CSV emission.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use edgeraft_core::ddpg::EpochLog;
use edgeraft_core::env::EpochInfo;

/// One row of `trial_{k}.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub trial: usize,
    pub seed: u64,
    pub episode: usize,
    pub epochs: usize,
    pub total_reward: f64,
    pub mean_reward: f64,
    /// Trailing mean of `total_reward` over the last `w` episodes (fewer at the start).
    pub moving_avg: f64,
    pub elections: u64,
    pub blocks: u64,
    pub stalled: usize,
    /// Latency means over epochs that committed; empty when every epoch stalled.
    pub mean_migration: Option<f64>,
    pub mean_block_generation: Option<f64>,
    pub mean_consensus: Option<f64>,
    pub mean_critic_loss: Option<f64>,
    pub mean_q: Option<f64>,
    /// Epochs led by each node, `;`-separated in node order.
    pub leader_counts: String,
    pub config_hash: String,
}

/// One row of `trial_{k}_epochs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub episode: usize,
    pub reward: f64,
    pub leader: Option<usize>,
    pub critic_loss: Option<f64>,
    pub mean_q: Option<f64>,
    pub refined_q: f64,
    pub base_q: f64,
    pub stalled: bool,
    pub config_hash: String,
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub episodes: usize,
    pub mean_total_reward: f64,
    pub std_total_reward: f64,
    pub mean_reward_per_epoch: f64,
    pub config_hash: String,
}

/// Trailing moving average; entry `i` averages `xs[i+1-w ..= i]`, clipped at 0.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0, "window must be positive");
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Mean and population standard deviation; `(NaN, NaN)` for an empty slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

pub fn episode_records(
    log: &[EpochLog<EpochInfo>],
    trial: usize,
    seed: u64,
    nodes: usize,
    window: usize,
    config_hash: &str,
) -> Vec<EpisodeRecord> {
    let mut records: Vec<EpisodeRecord> = Vec::new();
    let mut start = 0;
    while start < log.len() {
        let episode = log[start].episode;
        let end = start + log[start..].iter().take_while(|e| e.episode == episode).count();
        let epochs = &log[start..end];
        let committed = || epochs.iter().filter(|e| !e.info.stalled);
        let mut counts = vec![0usize; nodes];
        for leader in epochs.iter().filter_map(|e| e.info.leader) {
            counts[leader.0] += 1;
        }
        let total: f64 = epochs.iter().map(|e| e.reward).sum();
        records.push(EpisodeRecord {
            trial,
            seed,
            episode,
            epochs: epochs.len(),
            total_reward: total,
            mean_reward: total / epochs.len() as f64,
            moving_avg: 0.0,
            elections: epochs.iter().map(|e| e.info.elections).sum(),
            blocks: epochs.iter().map(|e| e.info.blocks).sum(),
            stalled: epochs.iter().filter(|e| e.info.stalled).count(),
            mean_migration: mean_of(committed().map(|e| e.info.breakdown.migration)),
            mean_block_generation: mean_of(committed().map(|e| e.info.breakdown.block_generation)),
            mean_consensus: mean_of(committed().map(|e| e.info.breakdown.consensus)),
            mean_critic_loss: mean_of(epochs.iter().filter_map(|e| e.critic_loss)),
            mean_q: mean_of(epochs.iter().filter_map(|e| e.mean_q)),
            leader_counts: counts.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";"),
            config_hash: config_hash.to_string(),
        });
        start = end;
    }
    let totals: Vec<f64> = records.iter().map(|r| r.total_reward).collect();
    for (r, ma) in records.iter_mut().zip(moving_average(&totals, window)) {
        r.moving_avg = ma;
    }
    records
}

pub fn epoch_records(log: &[EpochLog<EpochInfo>], config_hash: &str) -> Vec<EpochRecord> {
    log.iter()
        .map(|e| EpochRecord {
            epoch: e.epoch,
            episode: e.episode,
            reward: e.reward,
            leader: e.info.leader.map(|l| l.0),
            critic_loss: e.critic_loss,
            mean_q: e.mean_q,
            refined_q: e.refined_q,
            base_q: e.base_q,
            stalled: e.info.stalled,
            config_hash: config_hash.to_string(),
        })
        .collect()
}

pub fn summarize(records: &[EpisodeRecord], trial: usize, seed: u64, config_hash: &str) -> TrialSummary {
    let totals: Vec<f64> = records.iter().map(|r| r.total_reward).collect();
    let (mean, std) = mean_std(&totals);
    let epochs: usize = records.iter().map(|r| r.epochs).sum();
    TrialSummary {
        trial,
        seed,
        episodes: records.len(),
        mean_total_reward: mean,
        std_total_reward: std,
        mean_reward_per_epoch: totals.iter().sum::<f64>() / epochs as f64,
        config_hash: config_hash.to_string(),
    }
}

pub fn trial_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join(format!("trial_{trial}.csv"))
}

pub fn epochs_path(dir: &Path, trial: usize) -> PathBuf {
    dir.join(format!("trial_{trial}_epochs.csv"))
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes a CSV with the given header even when `rows` is empty.
pub fn write_csv_with_header<R: Serialize>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let text = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, row) in csv::Reader::from_reader(text.as_slice()).deserialize().enumerate() {
        rows.push(row.with_context(|| format!("{}: bad row {}", path.display(), i + 2))?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgeraft_core::latency::LatencyBreakdown;
    use edgeraft_core::raft::NodeId;

    fn naive_ma(xs: &[f64], w: usize, i: usize) -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        let mut j = i as isize;
        while j >= 0 && (i as isize - j) < w as isize {
            sum += xs[j as usize];
            n += 1.0;
            j -= 1;
        }
        sum / n
    }

    #[test]
    fn moving_average_matches_loop() {
        let xs: Vec<f64> = (0..57).map(|i| ((i * 37) % 11) as f64 - 4.5).collect();
        for w in [1, 2, 5, 20, 100] {
            let ma = moving_average(&xs, w);
            for i in 0..xs.len() {
                let want = naive_ma(&xs, w, i);
                assert!((ma[i] - want).abs() <= 1e-12 * want.abs().max(1.0), "w={w} i={i}");
            }
        }
        assert_eq!(moving_average(&[], 3), Vec::<f64>::new());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!((m, s), (5.0, 2.0));
        assert_eq!(mean_std(&[3.0; 6]), (3.0, 0.0));
    }

    fn entry(episode: usize, reward: f64, leader: Option<usize>) -> EpochLog<EpochInfo> {
        let b = LatencyBreakdown { migration: 1.0, block_generation: 2.0, consensus: 3.0, total: 6.0 };
        EpochLog {
            epoch: 0,
            episode,
            reward,
            critic_loss: None,
            mean_q: Some(reward),
            refined_q: 0.0,
            base_q: 0.0,
            done: false,
            info: EpochInfo {
                leader: leader.map(NodeId),
                breakdown: b,
                stalled: leader.is_none(),
                elections: 1,
                blocks: u64::from(leader.is_some()),
                queue_len: 1,
            },
        }
    }

    #[test]
    fn episodes_aggregate_their_epochs() {
        let log = vec![entry(0, -1.0, Some(2)), entry(0, -3.0, None), entry(1, -2.0, Some(0)), entry(1, -2.0, Some(0))];
        let recs = episode_records(&log, 4, 9, 3, 2, "h");
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].epochs, 2);
        assert_eq!(recs[0].total_reward, -4.0);
        assert_eq!(recs[0].mean_reward, -2.0);
        assert_eq!(recs[0].stalled, 1);
        assert_eq!(recs[0].blocks, 1);
        assert_eq!(recs[0].leader_counts, "0;0;1");
        assert_eq!(recs[0].mean_migration, Some(1.0));
        assert_eq!(recs[0].mean_critic_loss, None);
        assert_eq!(recs[1].leader_counts, "2;0;0");
        assert_eq!(recs[1].moving_avg, -4.0);
        let s = summarize(&recs, 4, 9, "h");
        assert_eq!((s.mean_total_reward, s.std_total_reward, s.mean_reward_per_epoch), (-4.0, 0.0, -2.0));
    }

    #[test]
    fn csv_round_trip_keeps_empty_options() {
        let dir = tempfile::tempdir().unwrap();
        let log = vec![entry(0, -1.5, None)];
        let recs = episode_records(&log, 0, 1, 2, 20, "abc");
        let path = trial_path(dir.path(), 0);
        write_csv(&path, &recs).unwrap();
        let back: Vec<EpisodeRecord> = read_csv(&path).unwrap();
        assert_eq!(back, recs);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("trial,seed,episode,epochs,total_reward"));
    }
}
