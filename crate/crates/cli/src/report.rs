//! Reward statistics, histograms and moving averages recomputed from trial CSVs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::metrics::{mean_std, moving_average, read_csv, write_csv, EpisodeRecord};

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub bins: usize,
    pub window: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { bins: 20, window: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub trial: usize,
    pub episodes: usize,
    pub mean: f64,
    pub std: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub trial: usize,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingAverageRow {
    pub trial: usize,
    pub episode: usize,
    pub total_reward: f64,
    pub moving_avg: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub stats: Vec<StatsRow>,
    pub histogram: Vec<HistogramRow>,
    pub moving_average: Vec<MovingAverageRow>,
    /// Index into `stats`.
    pub best: usize,
}

/// `(lower, upper, count)` per bin. A constant series yields one degenerate bin.
pub fn histogram(xs: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    assert!(bins > 0, "need at least one bin");
    if xs.is_empty() {
        return Vec::new();
    }
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return vec![(min, max, xs.len())];
    }
    let width = max - min;
    let mut counts = vec![0usize; bins];
    for &x in xs {
        let idx = ((x - min) / width * bins as f64).floor() as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let edge = |b: usize| if b == bins { max } else { min + width * b as f64 / bins as f64 };
    counts.into_iter().enumerate().map(|(b, c)| (edge(b), edge(b + 1), c)).collect()
}

/// Best trial: highest mean, then lowest σ, then lowest trial index.
pub fn best_trial(stats: &[StatsRow]) -> Option<usize> {
    (0..stats.len()).reduce(|best, i| {
        let (a, b) = (&stats[best], &stats[i]);
        let better = b.mean > a.mean || (b.mean == a.mean && (b.std < a.std || (b.std == a.std && b.trial < a.trial)));
        if better {
            i
        } else {
            best
        }
    })
}

/// Trial CSVs in `dir`, ordered by trial index.
pub fn trial_files(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading run directory {}", dir.display()))? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(idx) = name.strip_prefix("trial_").and_then(|s| s.strip_suffix(".csv")) {
            if let Ok(k) = idx.parse::<usize>() {
                files.push((k, path));
            }
        }
    }
    files.sort();
    Ok(files)
}

pub fn build(dir: &Path, opts: ReportOptions) -> Result<Report> {
    if opts.bins == 0 || opts.window == 0 {
        bail!("report needs bins > 0 and window > 0");
    }
    let files = trial_files(dir)?;
    if files.is_empty() {
        bail!("no trial_*.csv files in {}", dir.display());
    }
    let (mut stats, mut hist, mut ma) = (Vec::new(), Vec::new(), Vec::new());
    for (trial, path) in files {
        let rows: Vec<EpisodeRecord> = read_csv(&path)?;
        if rows.is_empty() {
            bail!("{}: no episodes", path.display());
        }
        if let Some(r) = rows.iter().find(|r| r.trial != trial) {
            bail!("{}: row for trial {} in file for trial {trial}", path.display(), r.trial);
        }
        if let Some(r) = rows.iter().find(|r| !r.total_reward.is_finite()) {
            bail!("{}: non-finite total_reward in episode {}", path.display(), r.episode);
        }
        let hash = rows[0].config_hash.clone();
        let totals: Vec<f64> = rows.iter().map(|r| r.total_reward).collect();
        let (mean, std) = mean_std(&totals);
        stats.push(StatsRow { trial, episodes: rows.len(), mean, std, config_hash: hash.clone() });
        for (bin, (lower, upper, count)) in histogram(&totals, opts.bins).into_iter().enumerate() {
            hist.push(HistogramRow { trial, bin, lower, upper, count, config_hash: hash.clone() });
        }
        for (r, avg) in rows.iter().zip(moving_average(&totals, opts.window)) {
            ma.push(MovingAverageRow {
                trial,
                episode: r.episode,
                total_reward: r.total_reward,
                moving_avg: avg,
                config_hash: hash.clone(),
            });
        }
    }
    let best = best_trial(&stats).expect("at least one trial");
    Ok(Report { stats, histogram: hist, moving_average: ma, best })
}

impl Report {
    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "trials: {}", self.stats.len());
        let _ = writeln!(out, "{:>6} {:>9} {:>16} {:>16}", "trial", "episodes", "mean", "std");
        for s in &self.stats {
            let _ = writeln!(out, "{:>6} {:>9} {:>16.6} {:>16.6}", s.trial, s.episodes, s.mean, s.std);
        }
        let b = &self.stats[self.best];
        let _ = writeln!(out, "best trial: {} (mean {:.6}, std {:.6})", b.trial, b.mean, b.std);
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_csv(&dir.join("report_stats.csv"), &self.stats)?;
        write_csv(&dir.join("report_histogram.csv"), &self.histogram)?;
        write_csv(&dir.join("report_moving_average.csv"), &self.moving_average)?;
        let txt = dir.join("report.txt");
        fs::write(&txt, self.text()).with_context(|| format!("writing {}", txt.display()))
    }
}
