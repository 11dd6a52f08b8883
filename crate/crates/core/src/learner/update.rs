use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::critic::critic_input;
use super::{Actor, ActorTrace, Adam, AlphaMode, CriticPair, EntropyCoefficients, Transition};
use crate::error::{Error, Result};

/// Batch means from one actor step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorBatchStats {
    pub loss: f64,
    pub mean_log_prob: f64,
    pub mean_weight_entropy: f64,
}

/// Mean of `α·log π(a|s) - min(Q1, Q2)(s, a) - β·H(w(s))` over fresh samples
/// `a ~ π(s)`, with its gradient added into `grads`.
pub fn actor_loss_and_grads<A: Actor, R: Rng + ?Sized>(
    batch: &[&Transition],
    actor: &A,
    critics: &CriticPair,
    alpha: f64,
    beta: f64,
    rng: &mut R,
    grads: &mut [Vec<f64>],
) -> Result<ActorBatchStats> {
    if batch.is_empty() {
        return Err(Error::Config("actor update needs a non-empty batch".into()));
    }
    let b = batch.len() as f64;
    let obs_dim = actor.obs_dim();
    let mut scratch = vec![0.0; critics.q[0].params.len()];
    let mut loss = 0.0;
    let mut log_prob = 0.0;
    let mut entropy = 0.0;
    for t in batch {
        let tr = actor.sample(&t.state, rng)?;
        let x = critic_input(&t.state, tr.action());
        let traces = [
            critics.q[0].forward_traced(&x)?,
            critics.q[1].forward_traced(&x)?,
        ];
        let q = [traces[0].output()[0], traces[1].output()[0]];
        let k = if q[0] <= q[1] { 0 } else { 1 };
        let h = tr.weight_entropy();
        loss += alpha * tr.log_prob() - q[k] - beta * h;
        log_prob += tr.log_prob();
        entropy += h;
        let d_input = critics.q[k].backward_into(&traces[k], &[-1.0 / b], &mut scratch)?;
        actor.accumulate_grads(&tr, alpha / b, &d_input[obs_dim..], -beta / b, grads)?;
    }
    Ok(ActorBatchStats {
        loss: loss / b,
        mean_log_prob: log_prob / b,
        mean_weight_entropy: entropy / b,
    })
}

/// One optimizer step per actor parameter block.
pub fn actor_update<A: Actor, R: Rng + ?Sized>(
    batch: &[&Transition],
    actor: &mut A,
    critics: &CriticPair,
    alpha: f64,
    beta: f64,
    optimizers: &mut [Adam],
    rng: &mut R,
) -> Result<ActorBatchStats> {
    let mut grads: Vec<Vec<f64>> = actor.param_blocks().iter().map(|b| vec![0.0; b.len()]).collect();
    let stats = actor_loss_and_grads(batch, actor, critics, alpha, beta, rng, &mut grads)?;
    for ((block, opt), g) in actor.param_blocks_mut().into_iter().zip(optimizers.iter_mut()).zip(&grads) {
        opt.step(block, g)?;
    }
    Ok(stats)
}

/// `-log α·(log π + target)` and its derivative in `log α`.
pub fn alpha_loss_and_grad(log_alpha: f64, mean_log_prob: f64, target_entropy: f64) -> (f64, f64) {
    let slope = -(mean_log_prob + target_entropy);
    (log_alpha * slope, slope)
}

/// One optimizer step on [`alpha_loss_and_grad`]; a no-op for a fixed `α`.
pub fn alpha_update(
    coeffs: &mut EntropyCoefficients,
    optimizer: &mut Adam,
    mean_log_prob: f64,
) -> Result<f64> {
    if let AlphaMode::Auto { .. } = coeffs.mode {
        let (_, grad) = alpha_loss_and_grad(coeffs.log_alpha, mean_log_prob, coeffs.target_entropy);
        let mut p = [coeffs.log_alpha];
        optimizer.step(&mut p, &[grad])?;
        coeffs.log_alpha = p[0];
    }
    Ok(coeffs.alpha())
}
