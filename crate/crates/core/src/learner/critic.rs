use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{Actor, ActorTrace, Adam, Transition};
use crate::approximators::{Mlp, MlpSpec};
use crate::error::{Error, Result};

/// Twin Q-networks over `[state, action]` with Polyak-averaged targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub q: [Mlp; 2],
    pub target: [Mlp; 2],
    pub gamma: f64,
    pub tau: f64,
}

pub(crate) fn critic_input(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(state.len() + action.len());
    v.extend_from_slice(state);
    v.extend_from_slice(action);
    v
}

impl CriticPair {
    /// Both online networks are drawn in order from `rng`; targets start as copies.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        gamma: f64,
        tau: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::new(obs_dim + action_dim, hidden, 1);
        let q1 = Mlp::init(spec.clone(), rng)?;
        let q2 = Mlp::init(spec, rng)?;
        Ok(Self {
            target: [q1.clone(), q2.clone()],
            q: [q1, q2],
            gamma,
            tau,
        })
    }

    pub fn q_values(&self, state: &[f64], action: &[f64]) -> Result<[f64; 2]> {
        let x = critic_input(state, action);
        Ok([self.q[0].forward(&x)?[0], self.q[1].forward(&x)?[0]])
    }

    pub fn target_min(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let x = critic_input(state, action);
        Ok(self.target[0].forward(&x)?[0].min(self.target[1].forward(&x)?[0]))
    }
}

/// `y = r + γ(1 - done)(min Q'(s', a') - α log π(a'|s'))` with `a' ~ π(s')`.
pub fn critic_targets<A: Actor, R: Rng + ?Sized>(
    batch: &[&Transition],
    actor: &A,
    critics: &CriticPair,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut ys = Vec::with_capacity(batch.len());
    for (index, t) in batch.iter().enumerate() {
        let next = actor.sample(&t.next_state, rng)?;
        let soft_value = critics.target_min(&t.next_state, next.action())? - alpha * next.log_prob();
        let live = if t.done { 0.0 } else { 1.0 };
        let y = t.reward + critics.gamma * live * soft_value;
        if !y.is_finite() {
            return Err(Error::NonFinite {
                what: "critic target",
                index,
            });
        }
        ys.push(y);
    }
    Ok(ys)
}

/// Sum over both critics of the mean squared error to `targets`, with the
/// gradient for each critic's parameters.
pub fn critic_loss_and_grads(
    batch: &[&Transition],
    targets: &[f64],
    critics: &CriticPair,
) -> Result<(f64, [Vec<f64>; 2])> {
    if batch.is_empty() {
        return Err(Error::Config("critic update needs a non-empty batch".into()));
    }
    crate::error::check_len("critic targets", batch.len(), targets.len())?;
    let b = batch.len() as f64;
    let mut grads = [
        vec![0.0; critics.q[0].params.len()],
        vec![0.0; critics.q[1].params.len()],
    ];
    let mut loss = 0.0;
    for (t, &y) in batch.iter().zip(targets) {
        let x = critic_input(&t.state, &t.action);
        for (k, g) in grads.iter_mut().enumerate() {
            let trace = critics.q[k].forward_traced(&x)?;
            let err = trace.output()[0] - y;
            loss += err * err / b;
            critics.q[k].backward_into(&trace, &[2.0 * err / b], g)?;
        }
    }
    Ok((loss, grads))
}

/// One regression step of both critics; returns the pre-step loss.
pub fn critic_update<A: Actor, R: Rng + ?Sized>(
    batch: &[&Transition],
    actor: &A,
    critics: &mut CriticPair,
    alpha: f64,
    optimizers: &mut [Adam; 2],
    rng: &mut R,
) -> Result<f64> {
    let targets = critic_targets(batch, actor, critics, alpha, rng)?;
    let (loss, grads) = critic_loss_and_grads(batch, &targets, critics)?;
    for k in 0..2 {
        optimizers[k].step(&mut critics.q[k].params, &grads[k])?;
    }
    Ok(loss)
}

/// `target ← τ·online + (1 - τ)·target`, written as `target + τ(online - target)`
/// so equal parameters stay put; `τ = 1` copies.
pub fn target_sync(critics: &mut CriticPair) {
    let tau = critics.tau;
    for k in 0..2 {
        let online = &critics.q[k].params;
        if tau == 1.0 {
            critics.target[k].params.copy_from_slice(online);
            continue;
        }
        for (t, o) in critics.target[k].params.iter_mut().zip(online.iter()) {
            *t += tau * (o - *t);
        }
    }
}
