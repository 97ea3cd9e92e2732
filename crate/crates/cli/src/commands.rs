//! The four CLI verbs as library functions.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use edgeraft_core::ddpg::{checkpoint, train as train_agent, EpochLog, TrainConfig};
use edgeraft_core::env::{EpochInfo, MecEnv};
use edgeraft_core::policy::{run_baseline, BaselinePolicy};
use edgeraft_core::sim::campaign::{check_run, check_run_with};
use edgeraft_core::sim::TraceRecord;
use edgeraft_core::Scalar;

use crate::config::{Precision, RunConfig};
use crate::metrics::{self, TrialSummary};
use crate::report::{self, Report, ReportOptions};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

fn prepare_out(cfg: &RunConfig) -> Result<String> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(RESOLVED_CONFIG);
    fs::write(&path, cfg.to_toml()).with_context(|| format!("writing {}", path.display()))?;
    Ok(cfg.hash())
}

fn make_env(cfg: &RunConfig) -> Result<MecEnv> {
    let env = MecEnv::new(cfg.cluster_config(), cfg.env.clone())?;
    Ok(match cfg.faults()? {
        Some(schedule) => env.with_faults(schedule),
        None => env,
    })
}

/// Writes one trial's CSVs and returns its summary.
fn emit_trial(cfg: &RunConfig, hash: &str, trial: usize, seed: u64, log: &[EpochLog<EpochInfo>]) -> Result<TrialSummary> {
    let episodes = metrics::episode_records(log, trial, seed, cfg.cluster.nodes, cfg.moving_average_window, hash);
    metrics::write_csv(&metrics::trial_path(&cfg.out_dir, trial), &episodes)?;
    metrics::write_csv(&metrics::epochs_path(&cfg.out_dir, trial), &metrics::epoch_records(log, hash))?;
    Ok(metrics::summarize(&episodes, trial, seed, hash))
}

fn train_trial<T: Scalar>(cfg: &RunConfig, hash: &str, trial: usize) -> Result<TrialSummary> {
    let seed = cfg.seed.wrapping_add(trial as u64);
    let mut env = make_env(cfg)?;
    let tc = TrainConfig { agent: cfg.agent.clone(), episodes: cfg.episodes, max_episode_steps: cfg.max_episode_steps };
    let outcome = train_agent::<T, _>(&mut env, &tc, seed).map_err(|e| anyhow!("trial {trial} (seed {seed}): {e}"))?;
    let ckpt = cfg.out_dir.join(format!("trial_{trial}.ckpt"));
    fs::write(&ckpt, checkpoint::encode(&outcome.nets)).with_context(|| format!("writing {}", ckpt.display()))?;
    let summary = emit_trial(cfg, hash, trial, seed, &outcome.log)?;
    info!("trial {trial}: mean episode reward {:.6}", summary.mean_total_reward);
    Ok(summary)
}

fn finish(cfg: &RunConfig, summaries: Vec<Result<TrialSummary>>) -> Result<Vec<TrialSummary>> {
    let summaries = summaries.into_iter().collect::<Result<Vec<_>>>()?;
    metrics::write_csv(&cfg.out_dir.join("summary.csv"), &summaries)?;
    Ok(summaries)
}

/// Trains `cfg.trials` agents in parallel; trial `k` uses seed `cfg.seed + k`.
pub fn train(cfg: &RunConfig) -> Result<Vec<TrialSummary>> {
    let hash = prepare_out(cfg)?;
    let summaries = (0..cfg.trials)
        .into_par_iter()
        .map(|k| match cfg.precision {
            Precision::F64 => train_trial::<f64>(cfg, &hash, k),
            Precision::F32 => train_trial::<f32>(cfg, &hash, k),
        })
        .collect();
    finish(cfg, summaries)
}

/// Runs a hand policy with the same trial seeding and CSV schema as `train`.
pub fn baseline(cfg: &RunConfig, policy: BaselinePolicy) -> Result<Vec<TrialSummary>> {
    if let BaselinePolicy::FixedNode(k) = policy {
        if k >= cfg.cluster.nodes {
            bail!("policy fixed-node:{k} outside a {}-node cluster", cfg.cluster.nodes);
        }
    }
    let hash = prepare_out(cfg)?;
    let summaries = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.seed.wrapping_add(trial as u64);
            let mut env = make_env(cfg)?;
            let log = run_baseline(&mut env, policy, cfg.episodes, seed, cfg.max_episode_steps)?;
            emit_trial(cfg, &hash, trial, seed, &log)
        })
        .collect();
    finish(cfg, summaries)
}

pub fn report(dir: &Path, opts: ReportOptions) -> Result<Report> {
    let r = report::build(dir, opts)?;
    r.write(dir)?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaftCheckRow {
    pub cluster_size: usize,
    pub seed: u64,
    pub violations: usize,
    pub elections: u64,
    pub leaders_elected: u64,
    pub max_term: u64,
    pub blocks_committed: u64,
    pub faults: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct RaftCheckOutcome {
    pub rows: Vec<RaftCheckRow>,
    /// Trace dumps written for failing runs.
    pub dumps: Vec<PathBuf>,
    /// One line per violation, with its repro seed.
    pub failures: Vec<String>,
}

/// Safety campaign: for every size in `raft_check.cluster_sizes`, runs seeds
/// `seed .. seed + runs`. Failing runs are replayed with a full trace sink.
pub fn raft_check(cfg: &RunConfig) -> Result<RaftCheckOutcome> {
    let hash = prepare_out(cfg)?;
    let rc = &cfg.raft_check;
    let base = cfg.cluster_config();
    let jobs: Vec<(usize, u64)> = rc
        .cluster_sizes
        .iter()
        .flat_map(|&n| (0..rc.runs).map(move |r| (n, cfg.seed.wrapping_add(r))))
        .collect();
    let reports = jobs
        .par_iter()
        .map(|&(n, seed)| check_run(&base, n, seed, rc).map_err(|e| anyhow!("raft-check n={n} seed={seed}: {e}")))
        .collect::<Result<Vec<_>>>()?;
    let mut outcome = RaftCheckOutcome { rows: Vec::new(), dumps: Vec::new(), failures: Vec::new() };
    for r in &reports {
        outcome.rows.push(RaftCheckRow {
            cluster_size: r.cluster_size,
            seed: r.seed,
            violations: r.violations.len(),
            elections: r.summary.elections,
            leaders_elected: r.summary.leaders_elected,
            max_term: r.summary.max_term,
            blocks_committed: r.summary.blocks_committed,
            faults: r.schedule.directives.len(),
            config_hash: hash.clone(),
        });
        if r.violations.is_empty() {
            continue;
        }
        for v in &r.violations {
            outcome.failures.push(format!("n={} seed={}: {v}", r.cluster_size, r.seed));
        }
        let (_, trace) = check_run_with(&base, r.cluster_size, r.seed, rc, Vec::<TraceRecord>::new())?;
        let path = cfg.out_dir.join(format!("raft_trace_n{}_seed{}.jsonl", r.cluster_size, r.seed));
        let mut text = String::new();
        for record in &trace {
            text.push_str(&serde_json::to_string(record)?);
            text.push('\n');
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        outcome.dumps.push(path);
    }
    metrics::write_csv(&cfg.out_dir.join("raft_check.csv"), &outcome.rows)?;
    Ok(outcome)
}
