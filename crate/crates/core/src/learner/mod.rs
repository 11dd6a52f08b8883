//! Off-policy maximum-entropy actor-critic.
//!
//! The objective is the soft actor-critic one with an extra bonus on the
//! entropy of the mixture weights: `r + α·H(π) + β_t·H(w)`. The trainer is
//! generic over [`Actor`] so the mixture policy and a plain Gaussian actor run
//! through the same loop.

mod adam;
mod critic;
mod replay;
mod sac;
mod trainer;
mod update;

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::{BetaSchedule, KianPolicy, KianTrace};

pub use adam::Adam;
pub use critic::{critic_loss_and_grads, critic_targets, critic_update, target_sync, CriticPair};
pub use replay::{ReplayBuffer, Transition};
pub use sac::{SacActor, SacTrace};
pub use trainer::{
    evaluate, steps_to_threshold, EpisodeResult, EvalSummary, IntervalStats, MetricsRow, Trainer,
    TrainerState, TrajectoryStep,
};
pub use update::{actor_loss_and_grads, actor_update, alpha_loss_and_grad, alpha_update, ActorBatchStats};

/// One reparameterized action sample and what its reverse pass needs.
pub trait ActorTrace {
    fn action(&self) -> &[f64];
    fn log_prob(&self) -> f64;
    /// `H(w)` at the sampled state; zero for a single component.
    fn weight_entropy(&self) -> f64;
}

/// A stochastic policy the learner can train.
pub trait Actor {
    type Trace: ActorTrace;

    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Self::Trace>;
    fn greedy_action(&self, obs: &[f64]) -> Result<Vec<f64>>;
    /// Mixture weights at `obs`, inner actor first.
    fn weights(&self, obs: &[f64]) -> Result<Vec<f64>>;
    fn param_blocks(&self) -> Vec<&[f64]>;
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;
    /// Adds `d_log_prob·∇log π + d_action·∇a + d_entropy·∇H(w)` into `grads`.
    fn accumulate_grads(
        &self,
        trace: &Self::Trace,
        d_log_prob: f64,
        d_action: &[f64],
        d_entropy: f64,
        grads: &mut [Vec<f64>],
    ) -> Result<()>;
}

impl ActorTrace for KianTrace {
    fn action(&self) -> &[f64] {
        &self.action
    }

    fn log_prob(&self) -> f64 {
        self.log_prob
    }

    fn weight_entropy(&self) -> f64 {
        self.weight_entropy
    }
}

impl Actor for KianPolicy {
    type Trace = KianTrace;

    fn obs_dim(&self) -> usize {
        KianPolicy::obs_dim(self)
    }

    fn action_dim(&self) -> usize {
        KianPolicy::action_dim(self)
    }

    fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<KianTrace> {
        KianPolicy::sample(self, obs, rng)
    }

    fn greedy_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        KianPolicy::greedy_action(self, obs)
    }

    fn weights(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(KianPolicy::weights(self, obs)?.w)
    }

    fn param_blocks(&self) -> Vec<&[f64]> {
        KianPolicy::param_blocks(self).to_vec()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        KianPolicy::param_blocks_mut(self).into_iter().collect()
    }

    fn accumulate_grads(
        &self,
        trace: &KianTrace,
        d_log_prob: f64,
        d_action: &[f64],
        d_entropy: f64,
        grads: &mut [Vec<f64>],
    ) -> Result<()> {
        KianPolicy::accumulate_grads(self, trace, d_log_prob, d_action, d_entropy, grads)
    }
}

/// Temperature of the policy-entropy term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaMode {
    Fixed(f64),
    /// Tuned by gradient steps on `log α` toward `-action_dim` entropy.
    Auto { initial: f64 },
}

/// `α` (fixed or tuned) and the `β_t` schedule; `beta: None` means `β ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyCoefficients {
    pub mode: AlphaMode,
    pub log_alpha: f64,
    pub target_entropy: f64,
    pub beta: Option<BetaSchedule>,
}

impl EntropyCoefficients {
    pub fn new(mode: AlphaMode, beta: Option<BetaSchedule>, action_dim: usize) -> Result<Self> {
        let initial = match mode {
            AlphaMode::Fixed(a) | AlphaMode::Auto { initial: a } => a,
        };
        if !(initial >= 0.0 && initial.is_finite()) {
            return Err(Error::Config("alpha must be finite and >= 0".into()));
        }
        if matches!(mode, AlphaMode::Auto { .. }) && initial == 0.0 {
            return Err(Error::Config("auto-tuned alpha needs a positive start".into()));
        }
        if let Some(b) = &beta {
            b.validate()?;
        }
        Ok(Self {
            mode,
            log_alpha: libm::log(initial),
            target_entropy: -(action_dim as f64),
            beta,
        })
    }

    pub fn alpha(&self) -> f64 {
        match self.mode {
            AlphaMode::Fixed(a) => a,
            AlphaMode::Auto { .. } => libm::exp(self.log_alpha),
        }
    }

    pub fn beta(&self, t: u64) -> f64 {
        match &self.beta {
            Some(s) => crate::policy::beta_at(s, t),
            None => 0.0,
        }
    }
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub alpha: AlphaMode,
    pub beta: Option<BetaSchedule>,
    pub critic_hidden: Vec<usize>,
    pub updates_per_step: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            tau: 0.005,
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            alpha: AlphaMode::Auto { initial: 0.1 },
            beta: None,
            critic_hidden: alloc::vec![256, 256],
            updates_per_step: 1,
            eval_interval: 2000,
            eval_episodes: 20,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return fail("batch_size must be positive and at most buffer_capacity");
        }
        for (name, lr) in [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("alpha_lr", self.alpha_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(alloc::format!("{name} must be positive")));
            }
        }
        if self.critic_hidden.contains(&0) {
            return fail("critic hidden sizes must be positive");
        }
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return fail("eval_interval and eval_episodes must be positive");
        }
        EntropyCoefficients::new(self.alpha, self.beta, 1)?;
        Ok(())
    }
}
