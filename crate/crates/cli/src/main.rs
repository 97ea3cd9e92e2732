use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use edgeraft_cli::commands::{self, RESOLVED_CONFIG};
use edgeraft_cli::report::ReportOptions;
use edgeraft_cli::{Overrides, RunConfig};
use edgeraft_core::policy::BaselinePolicy;

#[derive(Parser)]
#[command(name = "edgeraft", version, about = "Raft-over-MEC simulator and DDPG leader-selection experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Verb {
    /// Train one DDPG agent per trial.
    Train(Common),
    /// Run a hand policy: random, greedy-iota, or fixed-node:K.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "random")]
        policy: BaselinePolicy,
    },
    /// Summarize the trial CSVs in a run directory.
    Report {
        /// Run directory; its resolved config supplies bins and window.
        dir: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized fault campaign over the Raft safety properties.
    RaftCheck(Common),
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let base = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    base.resolve(&Overrides { seed: common.seed, trials: common.trials, out_dir: common.out.clone() })
}

fn run(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::Train(common) => {
            let cfg = resolve(&common)?;
            for s in commands::train(&cfg)? {
                println!("trial {} seed {}: mean {:.6} std {:.6}", s.trial, s.seed, s.mean_total_reward, s.std_total_reward);
            }
            println!("wrote {}", cfg.out_dir.display());
        }
        Verb::Baseline { common, policy } => {
            let cfg = resolve(&common)?;
            for s in commands::baseline(&cfg, policy)? {
                println!("trial {} seed {}: mean {:.6} std {:.6}", s.trial, s.seed, s.mean_total_reward, s.std_total_reward);
            }
            println!("wrote {}", cfg.out_dir.display());
        }
        Verb::Report { dir, config, out } => {
            let Some(dir) = dir.or(out) else { bail!("report needs a run directory (positional or --out)") };
            let cfg_path = config.unwrap_or_else(|| dir.join(RESOLVED_CONFIG));
            let opts = if cfg_path.exists() {
                let cfg = RunConfig::load(&cfg_path)?;
                ReportOptions { bins: cfg.histogram_bins, window: cfg.moving_average_window }
            } else {
                ReportOptions::default()
            };
            print!("{}", commands::report(&dir, opts)?.text());
        }
        Verb::RaftCheck(common) => {
            let cfg = resolve(&common)?;
            let outcome = commands::raft_check(&cfg)?;
            println!("runs: {}", outcome.rows.len());
            if !outcome.failures.is_empty() {
                for line in &outcome.failures {
                    eprintln!("violation {line}");
                }
                for path in &outcome.dumps {
                    eprintln!("trace {}", path.display());
                }
                bail!("{} safety violation(s); repro seeds above", outcome.failures.len());
            }
            println!("violations: 0");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            eprintln!("error: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
