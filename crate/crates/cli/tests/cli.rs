use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use edgeraft_cli::metrics::{write_csv, EpisodeRecord};
use edgeraft_core::ddpg::checkpoint;

fn edgeraft(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeraft")).args(args).output().expect("spawn edgeraft")
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    fs::write(
        &path,
        "trials = 2\nepisodes = 4\n[env]\nepochs_per_episode = 8\n[agent]\nwarmup = 4\nbatch_size = 4\nhidden = [8]\n[raft_check]\nruns = 4\ncluster_sizes = [1, 3]\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr_line(out: &Output) -> String {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    err.trim_end().to_string()
}

#[test]
fn train_emits_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let run = tmp.path().join("run");
    let out = edgeraft(&["train", "--config", &cfg, "--out", run.to_str().unwrap(), "--seed", "11"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..2 {
        let text = fs::read_to_string(run.join(format!("trial_{k}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 1 + 4, "header plus one row per episode");
        let epochs = fs::read_to_string(run.join(format!("trial_{k}_epochs.csv"))).unwrap();
        assert!(epochs.lines().count() > 4 * 8);
        let nets = checkpoint::decode::<f64>(&fs::read(run.join(format!("trial_{k}.ckpt"))).unwrap()).unwrap();
        assert_eq!(nets.state_dim(), 16);
        assert_eq!(nets.action_dim(), 4);
    }
    let summary = fs::read_to_string(run.join("summary.csv")).unwrap();
    assert!(summary.starts_with("trial,seed,episodes,mean_total_reward,std_total_reward"));
    assert!(summary.contains("\n0,11,4,") && summary.contains("\n1,12,4,"), "{summary}");
    let resolved = fs::read_to_string(run.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("cycles_per_sec") && resolved.contains("critic_lr"));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let a = tmp.path().join("a");
    assert!(edgeraft(&["baseline", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    let b = tmp.path().join("b");
    let resolved = a.join("resolved_config.toml");
    assert!(edgeraft(&["baseline", "--config", resolved.to_str().unwrap(), "--out", b.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(a.join("trial_1.csv")).unwrap(), fs::read(b.join("trial_1.csv")).unwrap());
}

#[test]
fn f32_precision_trains() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("f32.toml");
    fs::write(&cfg, "trials = 1\nepisodes = 2\nprecision = \"f32\"\n[env]\nepochs_per_episode = 5\n[agent]\nwarmup = 2\nbatch_size = 2\nhidden = [4]\n").unwrap();
    let run = tmp.path().join("run");
    let out = edgeraft(&["train", "--config", cfg.to_str().unwrap(), "--out", run.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(checkpoint::decode::<f32>(&fs::read(run.join("trial_0.ckpt")).unwrap()).is_ok());
}

#[test]
fn errors_are_single_prefixed_lines() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[agent]\nlearning_rate = 0.1\n").unwrap();
    let out = edgeraft(&["train", "--config", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let line = stderr_line(&out);
    assert!(line.starts_with("error: ") && line.contains("learning_rate"), "{line}");

    let out = edgeraft(&["baseline", "--policy", "bogus"]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("error: "));

    let cfg = tiny_config(tmp.path());
    let out = edgeraft(&["baseline", "--config", &cfg, "--policy", "fixed-node:9", "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).contains("fixed-node:9"));

    let out = edgeraft(&["report", tmp.path().join("missing").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).starts_with("error: "));
}

fn record(trial: usize, episode: usize, total: f64) -> EpisodeRecord {
    EpisodeRecord {
        trial,
        seed: trial as u64,
        episode,
        epochs: 10,
        total_reward: total,
        mean_reward: total / 10.0,
        moving_avg: 0.0,
        elections: 0,
        blocks: 0,
        stalled: 0,
        mean_migration: None,
        mean_block_generation: None,
        mean_consensus: None,
        mean_critic_loss: None,
        mean_q: None,
        leader_counts: "10;0".into(),
        config_hash: "h".into(),
    }
}

#[test]
fn report_names_dominating_trial_and_handles_constant_series() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    // Trial 1 shifts trial 0 up by a constant, so equal σ and a strictly higher mean.
    let base = [-3.0, -1.0, -2.0, -2.5, -1.5];
    write_csv(&dir.join("trial_0.csv"), &base.iter().enumerate().map(|(i, &x)| record(0, i, x)).collect::<Vec<_>>()).unwrap();
    write_csv(&dir.join("trial_1.csv"), &base.iter().enumerate().map(|(i, &x)| record(1, i, x + 0.5)).collect::<Vec<_>>()).unwrap();
    write_csv(&dir.join("trial_2.csv"), &(0..5).map(|i| record(2, i, -7.0)).collect::<Vec<_>>()).unwrap();
    let out = edgeraft(&["report", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("best trial: 1"));
    assert!(fs::read_to_string(dir.join("report.txt")).unwrap().contains("best trial: 1"));
    let hist = fs::read_to_string(dir.join("report_histogram.csv")).unwrap();
    let constant: Vec<&str> = hist.lines().filter(|l| l.starts_with("2,")).collect();
    assert_eq!(constant, vec!["2,0,-7.0,-7.0,5,h"]);
    for trial in ["0,", "1,"] {
        let total: usize = hist.lines().filter(|l| l.starts_with(trial)).map(|l| l.split(',').nth(4).unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 5);
    }
    let stats = fs::read_to_string(dir.join("report_stats.csv")).unwrap();
    assert!(stats.contains("\n2,5,-7.0,0.0,h"), "{stats}");
}

#[test]
fn report_rejects_corrupt_csv() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("trial_0.csv"), "trial,seed\n0,not-a-number\n").unwrap();
    let out = edgeraft(&["report", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr_line(&out).contains("trial_0.csv"));
}

#[test]
fn raft_check_passes_and_catches_a_broken_commit_rule() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let ok = tmp.path().join("ok");
    let out = edgeraft(&["raft-check", "--config", &cfg, "--out", ok.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(ok.join("raft_check.csv")).unwrap().lines().count(), 1 + 8);

    let broken = tmp.path().join("broken.toml");
    fs::write(&broken, "[raft_check]\nruns = 20\ncluster_sizes = [5]\ncommit_rule = \"leader-only\"\n").unwrap();
    let bad = tmp.path().join("bad");
    let out = edgeraft(&["raft-check", "--config", broken.to_str().unwrap(), "--out", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.lines().last().unwrap().starts_with("error: "), "{err}");
    assert!(err.contains("violation n=5 seed="), "{err}");
    let dumps: Vec<_> = fs::read_dir(&bad).unwrap().filter_map(|e| {
        let name = e.unwrap().file_name().into_string().unwrap();
        name.ends_with(".jsonl").then_some(name)
    }).collect();
    assert!(!dumps.is_empty());
    let first = fs::read_to_string(bad.join(&dumps[0])).unwrap();
    assert!(first.lines().next().unwrap().starts_with("{\"seq\":"));
}

#[test]
fn shipped_configs_parse_and_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = edgeraft_cli::RunConfig::load(&path).unwrap();
        cfg.resolve(&edgeraft_cli::Overrides::default()).unwrap();
        seen += 1;
    }
    assert!(seen >= 2);
}
