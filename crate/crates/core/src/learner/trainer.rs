use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{
    actor_update, alpha_update, critic_update, target_sync, Actor, ActorTrace, Adam, CriticPair,
    EntropyCoefficients, LearnerConfig, ReplayBuffer, Transition,
};
use crate::envs::{make_env, Env, TaskSpec, WorldState};
use crate::error::{check_len, Error, Result};
use crate::policy::categorical_entropy;
use crate::policy::MixtureWeights;
use crate::rng::{stream, RngState, Stream, StreamRng};

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub episode_return: f64,
    pub success_rate: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mean_hw: f64,
    /// Mean mixture weights over evaluation states, inner actor first.
    pub weights: Vec<f64>,
}

/// Loss sums since the last metrics row.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct IntervalStats {
    pub actor_loss_sum: f64,
    pub critic_loss_sum: f64,
    pub updates: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub episode_return: f64,
    pub success: bool,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub episode: usize,
    pub step: u64,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub success_rate: f64,
    pub mean_return: f64,
    pub episodes: Vec<EpisodeResult>,
    pub mean_weights: Vec<f64>,
    pub mean_weight_entropy: f64,
    /// Filled only when recording was requested.
    pub trajectory: Vec<TrajectoryStep>,
}

/// Greedy rollouts on placements from the `eval` stream of `seed`. The same
/// seed always yields the same episodes.
pub fn evaluate<A: Actor>(
    actor: &A,
    spec: &TaskSpec,
    episodes: usize,
    seed: u64,
    record: bool,
) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Input("evaluation needs at least one episode".into()));
    }
    check_len("actor observation", spec.obs_dim, actor.obs_dim())?;
    check_len("actor action", spec.action_dim, actor.action_dim())?;
    let mut env = Env::with_rng(spec.clone(), stream(seed, Stream::Eval))?;
    let mut results = Vec::with_capacity(episodes);
    let mut trajectory = Vec::new();
    let mut weight_sum: Vec<f64> = Vec::new();
    let mut entropy_sum = 0.0;
    let mut visited = 0usize;
    for episode in 0..episodes {
        let mut obs = if episode == 0 { env.observe() } else { env.reset() };
        let mut ret = 0.0;
        let mut length = 0;
        loop {
            let w = actor.weights(&obs)?;
            if weight_sum.is_empty() {
                weight_sum = vec![0.0; w.len()];
            }
            weight_sum.iter_mut().zip(&w).for_each(|(s, v)| *s += v);
            entropy_sum += categorical_entropy(&MixtureWeights {
                raw_scores: Vec::new(),
                w,
            });
            visited += 1;
            let action = actor.greedy_action(&obs)?;
            let r = env.step(&action)?;
            if record {
                trajectory.push(TrajectoryStep {
                    episode,
                    step: length,
                    state: obs,
                    action,
                    reward: r.reward,
                });
            }
            ret += r.reward;
            length += 1;
            obs = r.next_state;
            if r.done {
                results.push(EpisodeResult {
                    episode_return: ret,
                    success: r.info.success,
                    length,
                });
                break;
            }
        }
    }
    let n = episodes as f64;
    Ok(EvalSummary {
        success_rate: results.iter().filter(|e| e.success).count() as f64 / n,
        mean_return: results.iter().map(|e| e.episode_return).sum::<f64>() / n,
        episodes: results,
        mean_weights: weight_sum.iter().map(|s| s / visited as f64).collect(),
        mean_weight_entropy: entropy_sum / visited as f64,
        trajectory,
    })
}

/// Everything besides the actor parameters needed to continue a run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub step: u64,
    /// Online then target networks.
    pub critics: [Vec<f64>; 4],
    pub critic_opt: [Adam; 2],
    pub actor_opt: Vec<Adam>,
    pub alpha_opt: Adam,
    pub log_alpha: f64,
    pub replay: ReplayBuffer,
    pub env_state: WorldState,
    pub env_rng: RngState,
    pub policy_rng: RngState,
    pub learner_rng: RngState,
    pub interval: IntervalStats,
}

/// Interleaves environment steps with gradient steps.
#[derive(Debug, Clone)]
pub struct Trainer<A: Actor> {
    config: LearnerConfig,
    seed: u64,
    actor: A,
    critics: CriticPair,
    coeffs: EntropyCoefficients,
    actor_opt: Vec<Adam>,
    critic_opt: [Adam; 2],
    alpha_opt: Adam,
    replay: ReplayBuffer,
    env: Env,
    policy_rng: StreamRng,
    learner_rng: StreamRng,
    step: u64,
    interval: IntervalStats,
}

impl<A: Actor> Trainer<A> {
    pub fn new(spec: TaskSpec, actor: A, config: LearnerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        check_len("actor observation", spec.obs_dim, actor.obs_dim())?;
        check_len("actor action", spec.action_dim, actor.action_dim())?;
        let critics = CriticPair::new(
            spec.obs_dim,
            spec.action_dim,
            &config.critic_hidden,
            config.gamma,
            config.tau,
            &mut stream(seed, Stream::InitCritic),
        )?;
        let coeffs = EntropyCoefficients::new(config.alpha, config.beta, spec.action_dim)?;
        let actor_opt = actor
            .param_blocks()
            .iter()
            .map(|b| Adam::new(b.len(), config.actor_lr))
            .collect();
        let critic_opt = [
            Adam::new(critics.q[0].params.len(), config.critic_lr),
            Adam::new(critics.q[1].params.len(), config.critic_lr),
        ];
        Ok(Self {
            alpha_opt: Adam::new(1, config.alpha_lr),
            replay: ReplayBuffer::new(config.buffer_capacity)?,
            env: make_env(spec, seed)?,
            policy_rng: stream(seed, Stream::Policy),
            learner_rng: stream(seed, Stream::Learner),
            step: 0,
            interval: IntervalStats::default(),
            config,
            seed,
            actor,
            critics,
            coeffs,
            actor_opt,
            critic_opt,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn actor(&self) -> &A {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut A {
        &mut self.actor
    }

    pub fn into_actor(self) -> A {
        self.actor
    }

    pub fn critics(&self) -> &CriticPair {
        &self.critics
    }

    pub fn coefficients(&self) -> &EntropyCoefficients {
        &self.coeffs
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    /// One environment step, followed by gradient steps once warmup is over.
    /// Returns a metrics row at every evaluation boundary.
    pub fn step(&mut self) -> Result<Option<MetricsRow>> {
        let obs = self.env.observe();
        let action: Vec<f64> = if self.step < self.config.warmup_steps {
            (0..self.actor.action_dim())
                .map(|_| self.policy_rng.random_range(-1.0..=1.0))
                .collect()
        } else {
            self.actor.sample(&obs, &mut self.policy_rng)?.action().to_vec()
        };
        let r = self.env.step(&action)?;
        self.replay.push(Transition {
            state: obs,
            action,
            reward: r.reward,
            next_state: r.next_state,
            done: r.info.success,
        })?;
        if r.done {
            self.env.reset();
        }
        self.step += 1;
        if self.step >= self.config.warmup_steps && self.replay.len() >= self.config.batch_size {
            for _ in 0..self.config.updates_per_step {
                self.update()?;
            }
        }
        if self.step.is_multiple_of(self.config.eval_interval) {
            return Ok(Some(self.metrics_row()?));
        }
        Ok(None)
    }

    /// Runs `steps` environment steps and returns the metrics rows produced.
    pub fn run(&mut self, steps: u64) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        for _ in 0..steps {
            if let Some(row) = self.step()? {
                rows.push(row);
            }
        }
        Ok(rows)
    }

    fn update(&mut self) -> Result<()> {
        let batch = self.replay.sample(self.config.batch_size, &mut self.learner_rng)?;
        let alpha = self.coeffs.alpha();
        let critic_loss = critic_update(
            &batch,
            &self.actor,
            &mut self.critics,
            alpha,
            &mut self.critic_opt,
            &mut self.learner_rng,
        )?;
        let beta = self.coeffs.beta(self.step);
        let stats = actor_update(
            &batch,
            &mut self.actor,
            &self.critics,
            alpha,
            beta,
            &mut self.actor_opt,
            &mut self.learner_rng,
        )?;
        alpha_update(&mut self.coeffs, &mut self.alpha_opt, stats.mean_log_prob)?;
        target_sync(&mut self.critics);
        self.interval.actor_loss_sum += stats.loss;
        self.interval.critic_loss_sum += critic_loss;
        self.interval.updates += 1;
        Ok(())
    }

    /// Evaluates the current actor and closes the loss interval.
    pub fn metrics_row(&mut self) -> Result<MetricsRow> {
        let eval = evaluate(
            &self.actor,
            self.env.spec(),
            self.config.eval_episodes,
            self.seed,
            false,
        )?;
        let n = self.interval.updates.max(1) as f64;
        let row = MetricsRow {
            step: self.step,
            episode_return: eval.mean_return,
            success_rate: eval.success_rate,
            actor_loss: self.interval.actor_loss_sum / n,
            critic_loss: self.interval.critic_loss_sum / n,
            alpha: self.coeffs.alpha(),
            beta: self.coeffs.beta(self.step),
            mean_hw: eval.mean_weight_entropy,
            weights: eval.mean_weights,
        };
        self.interval = IntervalStats::default();
        Ok(row)
    }

    pub fn export_state(&self) -> TrainerState {
        TrainerState {
            step: self.step,
            critics: [
                self.critics.q[0].params.to_vec(),
                self.critics.q[1].params.to_vec(),
                self.critics.target[0].params.to_vec(),
                self.critics.target[1].params.to_vec(),
            ],
            critic_opt: self.critic_opt.clone(),
            actor_opt: self.actor_opt.clone(),
            alpha_opt: self.alpha_opt.clone(),
            log_alpha: self.coeffs.log_alpha,
            replay: self.replay.clone(),
            env_state: self.env.state().clone(),
            env_rng: RngState::capture(self.env.rng()),
            policy_rng: RngState::capture(&self.policy_rng),
            learner_rng: RngState::capture(&self.learner_rng),
            interval: self.interval,
        }
    }

    /// Overwrites the run state with one exported from an identically
    /// configured trainer.
    pub fn restore_state(&mut self, state: TrainerState) -> Result<()> {
        let nets = [
            &self.critics.q[0],
            &self.critics.q[1],
            &self.critics.target[0],
            &self.critics.target[1],
        ];
        for (net, saved) in nets.iter().zip(&state.critics) {
            check_len("critic parameters", net.params.len(), saved.len())?;
        }
        check_len("actor optimizers", self.actor_opt.len(), state.actor_opt.len())?;
        for (opt, block) in state.actor_opt.iter().zip(self.actor.param_blocks()) {
            check_len("actor optimizer moments", block.len(), opt.m.len())?;
        }
        let [q0, q1, t0, t1] = state.critics;
        self.critics.q[0].params.0 = q0;
        self.critics.q[1].params.0 = q1;
        self.critics.target[0].params.0 = t0;
        self.critics.target[1].params.0 = t1;
        self.step = state.step;
        self.critic_opt = state.critic_opt;
        self.actor_opt = state.actor_opt;
        self.alpha_opt = state.alpha_opt;
        self.coeffs.log_alpha = state.log_alpha;
        self.replay = state.replay;
        self.env.set_state(state.env_state);
        self.env.set_rng(state.env_rng.restore());
        self.policy_rng = state.policy_rng.restore();
        self.learner_rng = state.learner_rng.restore();
        self.interval = state.interval;
        Ok(())
    }
}

/// First logged step whose evaluation success reaches `threshold`.
pub fn steps_to_threshold(rows: &[MetricsRow], threshold: f64) -> Option<u64> {
    rows.iter().find(|r| r.success_rate >= threshold).map(|r| r.step)
}
