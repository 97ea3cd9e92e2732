use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Activation, Gradients, Mlp};
use super::replay::Transition;
use super::AgentError;
use crate::Scalar;

/// Online and target actor/critic.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNets<T> {
    pub actor: Mlp<T>,
    pub critic: Mlp<T>,
    pub target_actor: Mlp<T>,
    pub target_critic: Mlp<T>,
}

impl<T: Scalar> AgentNets<T> {
    /// Actor `state → hidden… → action` (tanh output), critic
    /// `state‖action → hidden… → 1`; targets start as exact copies.
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let actor_sizes: Vec<usize> = [state_dim].iter().chain(hidden).chain(&[action_dim]).copied().collect();
        let critic_sizes: Vec<usize> = [state_dim + action_dim].iter().chain(hidden).chain(&[1]).copied().collect();
        let actor = Mlp::gaussian(&actor_sizes, Activation::Tanh, rng);
        let critic = Mlp::gaussian(&critic_sizes, Activation::Identity, rng);
        AgentNets { target_actor: actor.clone(), target_critic: critic.clone(), actor, critic }
    }

    pub fn from_parts(actor: Mlp<T>, critic: Mlp<T>, target_actor: Mlp<T>, target_critic: Mlp<T>) -> Result<Self, AgentError> {
        if !actor.same_shape(&target_actor) || !critic.same_shape(&target_critic) {
            return Err(AgentError::Shape("target shapes differ from online shapes".into()));
        }
        if critic.output_dim() != 1 || critic.input_dim() != actor.input_dim() + actor.output_dim() {
            return Err(AgentError::Shape(format!(
                "critic {:?} does not fit actor {:?}",
                critic.sizes(),
                actor.sizes()
            )));
        }
        Ok(AgentNets { actor, critic, target_actor, target_critic })
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn policy(&self, state: &[T]) -> Result<Vec<T>, AgentError> {
        self.actor.forward(state)
    }

    pub fn q_value(&self, state: &[T], action: &[T]) -> Result<T, AgentError> {
        Ok(self.critic.forward(&joined(state, action))?[0])
    }
}

fn joined<T: Copy>(a: &[T], b: &[T]) -> Vec<T> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn clip_unit<T: Scalar>(v: T) -> T {
    v.max(-T::one()).min(T::one())
}

fn gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    let z: f64 = StandardNormal.sample(rng);
    T::lit(z)
}

/// Policy output plus i.i.d. Gaussian noise, clipped to `[-1, 1]`.
pub fn act<T: Scalar, R: Rng + ?Sized>(
    nets: &AgentNets<T>,
    state: &[T],
    noise_std: T,
    rng: &mut R,
) -> Result<Vec<T>, AgentError> {
    let mut a = nets.policy(state)?;
    if noise_std > T::zero() {
        for v in &mut a {
            *v = clip_unit(*v + noise_std * gaussian(rng));
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement<T> {
    pub action: Vec<T>,
    /// Critic value of `action`.
    pub q: T,
    /// Critic value of the unrefined action.
    pub base_q: T,
    /// Winning candidate; 0 is the base action itself.
    pub chosen: usize,
}

/// Best of `base` and `candidates` uniform samples from the L2 ball of
/// `radius` around it (clipped to the box), scored by the online critic.
pub fn refine_action<T: Scalar, R: Rng + ?Sized>(
    nets: &AgentNets<T>,
    state: &[T],
    base: &[T],
    radius: T,
    candidates: usize,
    rng: &mut R,
) -> Result<Refinement<T>, AgentError> {
    if base.len() != nets.action_dim() {
        return Err(AgentError::Dimension { expected: nets.action_dim(), got: base.len() });
    }
    let base_q = nets.q_value(state, base)?;
    let mut best = Refinement { action: base.to_vec(), q: base_q, base_q, chosen: 0 };
    if radius <= T::zero() {
        return Ok(best);
    }
    let d = base.len();
    let inv_d = T::one() / T::from_usize(d).unwrap();
    for k in 1..=candidates {
        let dir: Vec<T> = (0..d).map(|_| gaussian::<T, R>(rng)).collect();
        let norm = dir.iter().map(|&x| x * x).sum::<T>().sqrt();
        let u = T::lit(rng.random::<f64>());
        let r = radius * u.powf(inv_d);
        let cand: Vec<T> = if norm > T::zero() {
            base.iter().zip(&dir).map(|(&b, &x)| clip_unit(b + r * x / norm)).collect()
        } else {
            base.to_vec()
        };
        let q = nets.q_value(state, &cand)?;
        if q > best.q {
            best = Refinement { action: cand, q, base_q, chosen: k };
        }
    }
    Ok(best)
}

/// Moves a network along a direction in parameter space.
pub trait Optimizer<T: Scalar> {
    fn apply(&mut self, net: &mut Mlp<T>, direction: &Gradients<T>, lr: T);
}

/// Plain stochastic gradient steps.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sgd;

impl<T: Scalar> Optimizer<T> for Sgd {
    fn apply(&mut self, net: &mut Mlp<T>, direction: &Gradients<T>, lr: T) {
        net.apply_gradients(direction, lr);
    }
}

/// One descent step on the mean squared Bellman error. Returns the loss
/// before the step.
pub fn critic_update<T: Scalar, O: Optimizer<T>>(
    nets: &mut AgentNets<T>,
    batch: &[&Transition<T>],
    lr: T,
    discount: T,
    opt: &mut O,
) -> Result<T, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let scale = T::one() / T::from_usize(batch.len()).unwrap();
    let mut grads = Gradients::zeros_like(&nets.critic);
    let mut loss = T::zero();
    for t in batch {
        let next_action = nets.target_actor.forward(&t.next_state)?;
        let next_q = nets.target_critic.forward(&joined(&t.next_state, &next_action))?[0];
        let target = t.reward + discount * next_q;
        let cache = nets.critic.forward_cached(&joined(&t.state, &t.action))?;
        let err = cache.output()[0] - target;
        loss += err * err * scale;
        let back = nets.critic.backward(&cache, &[T::lit(2.0) * err * scale])?;
        grads.add_assign(&back.params);
    }
    if !loss.is_finite() {
        return Err(AgentError::NonFinite { what: "critic loss" });
    }
    if !grads.is_finite() {
        return Err(AgentError::NonFinite { what: "critic gradient" });
    }
    grads.scale(-T::one());
    opt.apply(&mut nets.critic, &grads, lr);
    Ok(loss)
}

/// One ascent step on the critic's value of the actor's actions. Returns the
/// mean value before the step.
pub fn actor_update<T: Scalar, O: Optimizer<T>>(
    nets: &mut AgentNets<T>,
    batch: &[&Transition<T>],
    lr: T,
    opt: &mut O,
) -> Result<T, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let scale = T::one() / T::from_usize(batch.len()).unwrap();
    let state_dim = nets.state_dim();
    let mut grads = Gradients::zeros_like(&nets.actor);
    let mut mean_q = T::zero();
    for t in batch {
        let actor_cache = nets.actor.forward_cached(&t.state)?;
        let critic_cache = nets.critic.forward_cached(&joined(&t.state, actor_cache.output()))?;
        mean_q += critic_cache.output()[0] * scale;
        let dq = nets.critic.backward(&critic_cache, &[scale])?;
        let back = nets.actor.backward(&actor_cache, &dq.input[state_dim..])?;
        grads.add_assign(&back.params);
    }
    if !(mean_q.is_finite() && grads.is_finite()) {
        return Err(AgentError::NonFinite { what: "actor gradient" });
    }
    opt.apply(&mut nets.actor, &grads, lr);
    Ok(mean_q)
}

/// `target ← κ·target + (1 − κ)·online` for both pairs.
pub fn soft_update<T: Scalar>(nets: &mut AgentNets<T>, keep: T) -> Result<(), AgentError> {
    if !(keep >= T::zero() && keep <= T::one()) {
        return Err(AgentError::Config { field: "soft_update", reason: format!("must be in [0, 1], got {keep}") });
    }
    let mix = T::one() - keep;
    let AgentNets { actor, critic, target_actor, target_critic } = nets;
    for (target, online) in [(target_actor, &*actor), (target_critic, &*critic)] {
        for (t, &o) in target.params_mut().zip(online.params()) {
            *t = keep * *t + mix * o;
        }
    }
    Ok(())
}
