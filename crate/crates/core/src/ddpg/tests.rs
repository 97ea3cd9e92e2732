use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{Environment, Step};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative error of two vectors, `‖a − n‖ / (‖a‖ + ‖n‖)`, 0 when both vanish.
fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let diff = a.iter().zip(n).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt() + n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of `f` over every parameter of `net`.
fn numeric_param_grad(net: &Mlp<f64>, f: impl Fn(&Mlp<f64>) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut probe = net.clone();
    (0..net.param_count())
        .map(|k| {
            let orig = *probe.params_mut().nth(k).unwrap();
            *probe.params_mut().nth(k).unwrap() = orig + h;
            let up = f(&probe);
            *probe.params_mut().nth(k).unwrap() = orig - h;
            let down = f(&probe);
            *probe.params_mut().nth(k).unwrap() = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn random_vec(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.random_range(-1.0..1.0)).collect()
}

fn check_shape_gradients(sizes: &[usize], output: Activation, seed: u64) -> f64 {
    let mut r = rng(seed);
    let net = Mlp::<f64>::gaussian(sizes, output, &mut r);
    let x = random_vec(&mut r, sizes[0]);
    let g = random_vec(&mut r, *sizes.last().unwrap());
    let loss = |m: &Mlp<f64>| m.forward(&x).unwrap().iter().zip(&g).map(|(y, w)| y * w).sum::<f64>();
    let back = net.backward(&net.forward_cached(&x).unwrap(), &g).unwrap();
    let param_err = rel_err(&back.params.flatten(), &numeric_param_grad(&net, loss));
    let h = 1e-5;
    let input_fd: Vec<f64> = (0..x.len())
        .map(|i| {
            let mut up = x.clone();
            up[i] += h;
            let mut down = x.clone();
            down[i] -= h;
            let f = |v: &[f64]| net.forward(v).unwrap().iter().zip(&g).map(|(y, w)| y * w).sum::<f64>();
            (f(&up) - f(&down)) / (2.0 * h)
        })
        .collect();
    param_err.max(rel_err(&back.input, &input_fd))
}

#[test]
fn backprop_matches_finite_differences_actor_and_critic_shapes() {
    for seed in 0..20 {
        let a = check_shape_gradients(&[8, 16, 16, 2], Activation::Tanh, seed);
        let c = check_shape_gradients(&[10, 16, 16, 1], Activation::Identity, 1000 + seed);
        assert!(a <= 1e-4 && c <= 1e-4, "seed {seed}: actor {a}, critic {c}");
    }
}

#[test]
fn chained_actor_gradient_matches_finite_differences() {
    let mut r = rng(5);
    let nets = AgentNets::<f64>::new(3, 2, &[6, 5], &mut r);
    let s = random_vec(&mut r, 3);
    let t = Transition { state: s.clone(), action: vec![0.0; 2], reward: 0.0, next_state: s.clone() };
    let q_of = |actor: &Mlp<f64>| {
        let a = actor.forward(&s).unwrap();
        nets.critic.forward(&[s.as_slice(), a.as_slice()].concat()).unwrap()[0]
    };
    let numeric = numeric_param_grad(&nets.actor, q_of);
    let before = nets.actor.clone();
    let mut stepped = nets.clone();
    let lr = 1e-3;
    actor_update(&mut stepped, &[&t], lr, &mut Sgd).unwrap();
    let analytic: Vec<f64> = stepped.actor.params().zip(before.params()).map(|(a, b)| (a - b) / lr).collect();
    assert!(rel_err(&analytic, &numeric) < 1e-4);
}

#[test]
fn soft_update_contracts_by_keep_factor() {
    let mut r = rng(9);
    let mut nets = AgentNets::<f64>::new(4, 2, &[8], &mut r);
    nets.target_actor = Mlp::gaussian(&nets.actor.sizes(), Activation::Tanh, &mut r);
    nets.target_critic = Mlp::gaussian(&nets.critic.sizes(), Activation::Identity, &mut r);
    let dist = |n: &AgentNets<f64>| {
        let a = n.target_actor.params().zip(n.actor.params()).map(|(t, o)| (t - o).powi(2));
        let c = n.target_critic.params().zip(n.critic.params()).map(|(t, o)| (t - o).powi(2));
        a.chain(c).sum::<f64>().sqrt()
    };
    let keep = 0.9;
    let d0 = dist(&nets);
    for k in 1..=50 {
        soft_update(&mut nets, keep).unwrap();
        let expected = keep.powi(k) * d0;
        assert!((dist(&nets) - expected).abs() <= 1e-10 * d0, "iteration {k}");
    }
}

#[test]
fn soft_update_edge_cases() {
    let mut r = rng(1);
    let base = AgentNets::<f64>::new(2, 1, &[3], &mut r);
    let mut nets = base.clone();
    nets.actor.params_mut().for_each(|p| *p += 1.0);
    let frozen = nets.clone();
    soft_update(&mut nets, 1.0).unwrap();
    assert_eq!(nets, frozen);
    soft_update(&mut nets, 0.0).unwrap();
    assert_eq!(nets.target_actor, nets.actor);
    assert_eq!(nets.target_critic, nets.critic);

    let mut z = base.clone();
    z.target_actor.params_mut().for_each(|p| *p = 0.0);
    z.target_critic.params_mut().for_each(|p| *p = 0.0);
    soft_update(&mut z, 0.9).unwrap();
    for (t, o) in z.target_actor.params().zip(z.actor.params()).chain(z.target_critic.params().zip(z.critic.params())) {
        assert!((t - 0.1 * o).abs() <= 1e-15 * o.abs(), "{t} vs {}", 0.1 * o);
    }
    assert!(soft_update(&mut z, 1.5).is_err());
}

#[test]
fn noiseless_act_is_policy() {
    let mut r = rng(2);
    let nets = AgentNets::<f64>::new(4, 3, &[5], &mut r);
    let s = [0.1, 0.2, 0.3, 0.4];
    assert_eq!(act(&nets, &s, 0.0, &mut r).unwrap(), nets.policy(&s).unwrap());
    let a = act(&nets, &s, 0.3, &mut rng(7)).unwrap();
    assert_eq!(a, act(&nets, &s, 0.3, &mut rng(7)).unwrap());
    assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn exploration_noise_is_centered() {
    let mut r = rng(3);
    let mut nets = AgentNets::<f64>::new(2, 1, &[4], &mut r);
    // Zero the actor so the policy output sits at 0 and clipping never binds.
    nets.actor.params_mut().for_each(|p| *p = 0.0);
    let sigma = 0.1;
    let draws = 100_000;
    let s = [0.5, -0.5];
    let mean = (0..draws).map(|_| act(&nets, &s, sigma, &mut r).unwrap()[0]).sum::<f64>() / draws as f64;
    assert!(mean.abs() <= 3.0 * sigma / (draws as f64).sqrt(), "{mean}");
}

#[test]
fn zero_radius_refinement_returns_base() {
    let mut r = rng(4);
    let nets = AgentNets::<f64>::new(2, 2, &[4], &mut r);
    let base = [0.3, -0.7];
    let out = refine_action(&nets, &[0.0, 1.0], &base, 0.0, 16, &mut r).unwrap();
    assert_eq!(out.action, base.to_vec());
    assert_eq!(out.chosen, 0);
}

#[test]
fn refinement_matches_brute_force_on_linear_critic() {
    let mut r = rng(6);
    let mut nets = AgentNets::<f64>::new(2, 3, &[4], &mut r);
    // Q(s, a) = w · a
    let w = [0.5, -1.0, 2.0];
    let mut critic = Mlp::<f64>::zeros(&[5, 1], Activation::Identity);
    critic.layers_mut()[0].weights = vec![0.0, 0.0, w[0], w[1], w[2]];
    nets.critic = critic;
    let s = [0.2, 0.1];
    let base = [0.0, 0.0, 0.0];
    let out = refine_action(&nets, &s, &base, 0.2, 16, &mut rng(8)).unwrap();

    // Regenerate the same candidates with the same stream.
    let mut replay = rng(8);
    let mut cands = vec![base.to_vec()];
    for _ in 0..16 {
        let dir: Vec<f64> = (0..3).map(|_| replay.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rad = 0.2 * replay.random::<f64>().powf(1.0 / 3.0);
        cands.push(base.iter().zip(&dir).map(|(b, x)| (b + rad * x / norm).clamp(-1.0, 1.0)).collect());
    }
    let score = |a: &[f64]| a.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>();
    let best = (0..cands.len()).fold(0, |b, k| if score(&cands[k]) > score(&cands[b]) { k } else { b });
    assert_eq!(out.chosen, best);
    assert_eq!(out.action, cands[best]);
    for c in &cands {
        assert!(c.iter().zip(&base).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() <= 0.2 + 1e-12);
    }
}

#[test]
fn refinement_never_worse_than_base() {
    let mut r = rng(10);
    for _ in 0..200 {
        let nets = AgentNets::<f64>::new(4, 2, &[6], &mut r);
        let s = random_vec(&mut r, 4);
        let base = random_vec(&mut r, 2);
        let out = refine_action(&nets, &s, &base, 0.3, 8, &mut r).unwrap();
        assert!(out.q >= out.base_q);
        assert_eq!(out.base_q, nets.q_value(&s, &base).unwrap());
        assert_eq!(out.q, nets.q_value(&s, &out.action).unwrap());
    }
}

fn tiny_nets() -> AgentNets<f64> {
    // 1-1 actor and 1-input-plus-1-action critic, single linear layers.
    let mut actor = Mlp::<f64>::zeros(&[1, 1], Activation::Tanh);
    actor.layers_mut()[0].weights = vec![0.4];
    let mut critic = Mlp::<f64>::zeros(&[2, 1], Activation::Identity);
    critic.layers_mut()[0].weights = vec![0.3, -0.2];
    critic.layers_mut()[0].bias = vec![0.1];
    AgentNets::from_parts(actor.clone(), critic.clone(), actor, critic).unwrap()
}

#[test]
fn critic_loss_zero_when_already_exact() {
    let mut nets = tiny_nets();
    let s = vec![0.5];
    let a = vec![0.25];
    let q = nets.q_value(&s, &a).unwrap();
    // λ = 0 so the target is the reward itself.
    let t = Transition { state: s, action: a, reward: q, next_state: vec![0.9] };
    let before = nets.clone();
    let loss = critic_update(&mut nets, &[&t], 1e-3, 0.0, &mut Sgd).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(nets, before);
}

#[test]
fn critic_step_reduces_single_sample_loss() {
    let mut nets = tiny_nets();
    let t = Transition { state: vec![0.5], action: vec![-0.3], reward: -2.0, next_state: vec![0.1] };
    let pre = critic_update(&mut nets, &[&t], 1e-3, 0.9, &mut Sgd).unwrap();
    let mut probe = nets.clone();
    let post = critic_update(&mut probe, &[&t], 1e-3, 0.9, &mut Sgd).unwrap();
    assert!(post < pre, "{post} !< {pre}");
}

#[test]
fn critic_target_uses_discounted_target_nets() {
    let mut nets = tiny_nets();
    let t = Transition { state: vec![0.5], action: vec![-0.3], reward: -2.0, next_state: vec![0.1] };
    let a_next = nets.target_actor.forward(&[0.1]).unwrap()[0];
    let q_next = 0.3 * 0.1 - 0.2 * a_next + 0.1;
    let y = -2.0 + 0.9 * q_next;
    let q = 0.3 * 0.5 - 0.2 * -0.3 + 0.1;
    let loss = critic_update(&mut nets, &[&t], 1e-3, 0.9, &mut Sgd).unwrap();
    assert!((loss - (q - y) * (q - y)).abs() < 1e-15);
    assert!(critic_update(&mut nets, &[], 1e-3, 0.9, &mut Sgd).is_err());
}

#[test]
fn constant_critic_leaves_actor_unchanged() {
    let mut r = rng(12);
    let mut nets = AgentNets::<f64>::new(3, 2, &[4], &mut r);
    nets.critic.params_mut().for_each(|p| *p = 0.0);
    nets.critic.layers_mut().last_mut().unwrap().bias = vec![3.0];
    let t = Transition { state: vec![0.1, 0.2, 0.3], action: vec![0.0; 2], reward: 0.0, next_state: vec![0.0; 3] };
    let before = nets.actor.clone();
    let q = actor_update(&mut nets, &[&t], 1e-2, &mut Sgd).unwrap();
    assert_eq!(q, 3.0);
    assert_eq!(nets.actor, before);
}

#[test]
fn actor_ascends_quadratic_critic() {
    // An MLP cannot hold -½‖a - a*‖² exactly, so each step installs the
    // linear critic with the same action gradient at the current policy output.
    let mut r = rng(13);
    let mut nets = AgentNets::<f64>::new(2, 2, &[8], &mut r);
    let target = [0.6, -0.4];
    let s = vec![0.3, -0.1];
    let t = Transition { state: s.clone(), action: vec![0.0; 2], reward: 0.0, next_state: s.clone() };
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let a = nets.policy(&s).unwrap();
        let mut critic = Mlp::<f64>::zeros(&[4, 1], Activation::Identity);
        critic.layers_mut()[0].weights = vec![0.0, 0.0, target[0] - a[0], target[1] - a[1]];
        nets.critic = critic;
        let dist = a.iter().zip(&target).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(dist <= last + 1e-15, "{dist} > {last}");
        last = dist;
        actor_update(&mut nets, &[&t], 0.05, &mut Sgd).unwrap();
    }
    assert!(last < 0.05, "{last}");
}

/// Two-armed contextual toy: reward is −‖a − (0.5, −0.5)‖², fixed length episodes.
struct Toy {
    steps: usize,
    len: usize,
    state: Vec<f64>,
}

impl Environment for Toy {
    type Info = ();
    type Error = std::convert::Infallible;

    fn state_dim(&self) -> usize {
        2
    }
    fn action_dim(&self) -> usize {
        2
    }
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, Self::Error> {
        self.steps = 0;
        self.state = vec![(seed % 7) as f64 / 7.0, 0.0];
        Ok(vec![0.0, 0.0])
    }
    fn step(&mut self, a: &[f64]) -> Result<Step<()>, Self::Error> {
        self.steps += 1;
        let reward = -((a[0] - 0.5).powi(2) + (a[1] + 0.5).powi(2));
        Ok(Step { state: self.state.clone(), reward, done: self.steps == self.len, info: () })
    }
}

fn toy(len: usize) -> Toy {
    Toy { steps: 0, len, state: vec![0.0, 0.0] }
}

fn small_config(episodes: usize) -> TrainConfig {
    TrainConfig {
        agent: AgentConfig { hidden: vec![8], batch_size: 8, warmup: 8, ..AgentConfig::default() },
        episodes,
        ..TrainConfig::default()
    }
}

#[test]
fn warmup_longer_than_run_never_updates() {
    let mut cfg = small_config(2);
    cfg.agent.warmup = 1000;
    let out = train::<f64, _>(&mut toy(5), &cfg, 42).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(derive_seed(42, u64::MAX));
    let init = AgentNets::<f64>::new(2, 2, &[8], &mut r);
    assert_eq!(out.nets, init);
    assert!(out.log.iter().all(|e| e.critic_loss.is_none()));
    assert_eq!(out.log.len(), 10);
}

#[test]
fn three_epochs_fill_deque_in_order() {
    let cfg = TrainConfig { episodes: 1, ..small_config(1) };
    let out = train::<f64, _>(&mut toy(3), &cfg, 1).unwrap();
    assert_eq!(out.replay.len(), 3);
    let rewards: Vec<f64> = out.replay.iter().map(|t| t.reward).collect();
    let logged: Vec<f64> = out.log.iter().map(|e| e.reward).collect();
    assert_eq!(rewards, logged);
    assert_eq!(out.replay.iter().next().unwrap().state, vec![0.0, 0.0]);
    let epochs: Vec<u64> = out.log.iter().map(|e| e.epoch).collect();
    assert_eq!(epochs, vec![1, 2, 3]);
}

#[test]
fn training_is_deterministic_and_dominance_holds() {
    let cfg = small_config(20);
    let a = train::<f64, _>(&mut toy(10), &cfg, 5).unwrap();
    let b = train::<f64, _>(&mut toy(10), &cfg, 5).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.nets, b.nets);
    assert!(a.log.iter().all(|e| e.refined_q >= e.base_q));
    assert!(a.log.iter().skip(8).all(|e| e.critic_loss.is_some()));
}

#[test]
fn training_improves_toy_reward() {
    let cfg = TrainConfig {
        agent: AgentConfig { hidden: vec![16], batch_size: 16, warmup: 16, actor_lr: 1e-2, critic_lr: 1e-2, discount: 0.0, soft_update: 0.9, ..AgentConfig::default() },
        episodes: 60,
        ..TrainConfig::default()
    };
    let out = train::<f64, _>(&mut toy(10), &cfg, 3).unwrap();
    let head: f64 = out.log[..50].iter().map(|e| e.reward).sum::<f64>() / 50.0;
    let tail: f64 = out.log[out.log.len() - 50..].iter().map(|e| e.reward).sum::<f64>() / 50.0;
    assert!(tail > head, "{tail} <= {head}");
}

#[test]
fn trains_in_single_precision() {
    let out = train::<f32, _>(&mut toy(5), &small_config(4), 8).unwrap();
    assert_eq!(out.log.len(), 20);
    assert!(out.nets.actor.is_finite());
}

#[test]
fn config_validation() {
    assert!(AgentConfig::default().validate().is_ok());
    let bad = [
        AgentConfig { critic_lr: 0.0, ..AgentConfig::default() },
        AgentConfig { actor_lr: 1.0, ..AgentConfig::default() },
        AgentConfig { discount: 1.0, ..AgentConfig::default() },
        AgentConfig { soft_update: 0.0, ..AgentConfig::default() },
        AgentConfig { batch_size: 0, ..AgentConfig::default() },
        AgentConfig { hidden: vec![], ..AgentConfig::default() },
        AgentConfig { noise_std: f64::NAN, ..AgentConfig::default() },
    ];
    for c in bad {
        assert!(c.validate().is_err(), "{c:?}");
    }
}

#[test]
fn derived_seeds_differ_per_stream() {
    let seeds: std::collections::BTreeSet<u64> = (0..100).map(|k| derive_seed(7, k)).collect();
    assert_eq!(seeds.len(), 100);
    assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
}
