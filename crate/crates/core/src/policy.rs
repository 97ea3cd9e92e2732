//! Hand-written comparison policies for the leader-bias environment.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ddpg::{derive_seed, EpochLog};
use crate::env::{EnvError, EpochInfo, Environment, MecEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselinePolicy {
    /// Independent uniform scores in `[-1, 1]`.
    Random,
    /// Always favors the node with the most CPU cycles per second.
    GreedyCycles,
    /// Always favors one node.
    FixedNode(usize),
}

impl fmt::Display for BaselinePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaselinePolicy::Random => f.write_str("random"),
            BaselinePolicy::GreedyCycles => f.write_str("greedy-iota"),
            BaselinePolicy::FixedNode(k) => write!(f, "fixed-node:{k}"),
        }
    }
}

impl FromStr for BaselinePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(BaselinePolicy::Random),
            "greedy-iota" | "greedy" => Ok(BaselinePolicy::GreedyCycles),
            _ => s
                .strip_prefix("fixed-node:")
                .and_then(|k| k.parse().ok())
                .map(BaselinePolicy::FixedNode)
                .ok_or_else(|| format!("unknown policy `{s}` (expected random, greedy-iota or fixed-node:K)")),
        }
    }
}

/// Scores that put `node` first and everyone else last.
pub fn favoring(n: usize, node: usize) -> Vec<f64> {
    (0..n).map(|i| if i == node { 1.0 } else { -1.0 }).collect()
}

impl BaselinePolicy {
    pub fn action<R: Rng + ?Sized>(&self, cycles_per_sec: &[f64], rng: &mut R) -> Vec<f64> {
        let n = cycles_per_sec.len();
        match *self {
            BaselinePolicy::Random => (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect(),
            BaselinePolicy::GreedyCycles => {
                let best = (0..n).fold(0, |b, i| if cycles_per_sec[i] > cycles_per_sec[b] { i } else { b });
                favoring(n, best)
            }
            BaselinePolicy::FixedNode(k) => favoring(n, k),
        }
    }
}

const POLICY_STREAM: u64 = u64::MAX - 1;

/// Runs `episodes` episodes of `policy`, seeding episodes exactly as
/// [`train`](crate::ddpg::train) does so the two are comparable.
pub fn run_baseline(
    env: &mut MecEnv,
    policy: BaselinePolicy,
    episodes: usize,
    seed: u64,
    max_episode_steps: usize,
) -> Result<Vec<EpochLog<EpochInfo>>, EnvError> {
    if let BaselinePolicy::FixedNode(k) = policy {
        if k >= env.node_count() {
            return Err(EnvError::InvalidAction(format!("fixed node {k} outside a {}-node cluster", env.node_count())));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, POLICY_STREAM));
    let cycles = env.cluster().cycles_per_sec.clone();
    let mut log = Vec::new();
    let mut epoch = 0;
    for episode in 0..episodes {
        env.reset(derive_seed(seed, episode as u64))?;
        for _ in 0..max_episode_steps {
            let step = env.step(&policy.action(&cycles, &mut rng))?;
            epoch += 1;
            log.push(EpochLog {
                epoch,
                episode,
                reward: step.reward,
                critic_loss: None,
                mean_q: None,
                refined_q: 0.0,
                base_q: 0.0,
                done: step.done,
                info: step.info,
            });
            if step.done {
                break;
            }
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::sim::ClusterConfig;

    #[test]
    fn parses_names() {
        for p in [BaselinePolicy::Random, BaselinePolicy::GreedyCycles, BaselinePolicy::FixedNode(3)] {
            assert_eq!(p.to_string().parse::<BaselinePolicy>(), Ok(p));
        }
        assert!("fixed-node:x".parse::<BaselinePolicy>().is_err());
        assert!("best".parse::<BaselinePolicy>().is_err());
    }

    fn mean(log: &[EpochLog<EpochInfo>]) -> f64 {
        log.iter().map(|e| e.reward).sum::<f64>() / log.len() as f64
    }

    #[test]
    fn baselines_rank_as_the_latency_oracle_predicts() {
        let mut env = MecEnv::new(ClusterConfig::generated(4, 7), EnvConfig { epochs_per_episode: 20, ..EnvConfig::default() }).unwrap();
        let lat = env.forced_leader_latencies().unwrap();
        let worst = (0..4).max_by(|&i, &j| lat[i].total_cmp(&lat[j])).unwrap();
        let random = run_baseline(&mut env, BaselinePolicy::Random, 5, 1, 1000).unwrap();
        let greedy = run_baseline(&mut env, BaselinePolicy::GreedyCycles, 5, 1, 1000).unwrap();
        let fixed = run_baseline(&mut env, BaselinePolicy::FixedNode(worst), 5, 1, 1000).unwrap();
        assert_eq!(random.len(), 100);
        for ep in 0..5 {
            let g: Vec<_> = greedy.iter().filter(|e| e.episode == ep).cloned().collect();
            assert!(mean(&g) >= mean(&random), "episode {ep}");
        }
        assert!(mean(&fixed) < mean(&random) && mean(&fixed) < mean(&greedy));
        assert_eq!(random, run_baseline(&mut env, BaselinePolicy::Random, 5, 1, 1000).unwrap());
    }

    #[test]
    fn rejects_out_of_range_node() {
        let mut env = MecEnv::new(ClusterConfig::generated(3, 1), EnvConfig::default()).unwrap();
        assert!(run_baseline(&mut env, BaselinePolicy::FixedNode(3), 1, 0, 10).is_err());
    }
}
