//! Run and group configuration files.
//!
//! Both are TOML: flat `key = value` pairs grouped under `[section]` headers
//! (or written as dotted keys such as `learner.batch_size = 32`). Unknown keys
//! are rejected so a typo never silently falls back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use surgirl_core::envs::{TaskId, TaskSpec};
use surgirl_core::incremental::{Pipeline, TransferPlan};
use surgirl_core::learner::{AlphaMode, LearnerConfig};
use surgirl_core::policy::{BetaSchedule, KianConfig};

use crate::error::{HarnessError, Result};

/// Entropy temperatures accepted without `allow_unlisted_alpha`.
pub const LISTED_ALPHAS: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-5];
/// Categorical-entropy floors accepted without `allow_unlisted_base`.
pub const LISTED_BETA_BASES: [f64; 2] = [0.0, 2e-4];
/// Output root used when `SURGIRL_OUT` is unset.
pub const DEFAULT_OUT: &str = "runs";
pub const OUT_ENV: &str = "SURGIRL_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Plain soft actor-critic: no knowledge, no categorical entropy.
    Sac,
    /// Mixture over the scripted knowledge set without the categorical entropy term.
    Kian,
    /// Mixture with the decaying categorical entropy bonus.
    KianAce,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sac => "sac",
            Method::Kian => "kian",
            Method::KianAce => "kian-ace",
        }
    }

    pub fn uses_knowledge(self) -> bool {
        self != Method::Sac
    }
}

/// Per-task overrides of the environment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub horizon: Option<usize>,
    pub grasp_threshold: Option<f64>,
    pub c_og: Option<f64>,
    pub c_ro: Option<f64>,
    pub c_rg: Option<f64>,
    pub p: Option<f64>,
    pub goal_tolerance: Option<f64>,
    pub action_scale: Option<f64>,
    pub collide_distance: Option<f64>,
    pub hold_steps: Option<usize>,
    /// Write `(step, state, action, reward)` of a final greedy evaluation.
    pub trajectory_dump: bool,
}

impl EnvSection {
    pub fn apply(&self, task: TaskId) -> Result<TaskSpec> {
        let mut spec = TaskSpec::new(task);
        let c = &mut spec.coefficients;
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(c.c_og, self.c_og);
        set!(c.c_ro, self.c_ro);
        set!(c.c_rg, self.c_rg);
        set!(c.p, self.p);
        set!(spec.horizon, self.horizon);
        set!(spec.grasp_threshold, self.grasp_threshold);
        set!(spec.goal_tolerance, self.goal_tolerance);
        set!(spec.action_scale, self.action_scale);
        set!(spec.collide_distance, self.collide_distance);
        set!(spec.hold_steps, self.hold_steps);
        spec.validate().map_err(|e| HarnessError::Config(format!("env: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub inner_hidden: Vec<usize>,
    pub query_hidden: Vec<usize>,
    pub key_dim: usize,
    pub temperature: f64,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            inner_hidden: vec![64, 64],
            query_hidden: vec![32, 32],
            key_dim: 4,
            temperature: 1.0,
        }
    }
}

impl PolicySection {
    pub fn kian_config(&self) -> KianConfig {
        KianConfig {
            inner_hidden: self.inner_hidden.clone(),
            query_hidden: self.query_hidden.clone(),
            key_dim: self.key_dim,
            temperature: self.temperature,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.key_dim == 0 {
            return Err(HarnessError::Config("policy.key_dim must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(HarnessError::Config(
                "policy.temperature must be positive".into(),
            ));
        }
        for (name, dims) in [
            ("policy.inner_hidden", &self.inner_hidden),
            ("policy.query_hidden", &self.query_hidden),
        ] {
            if dims.contains(&0) {
                return Err(HarnessError::Config(format!("{name}: zero-width layer")));
            }
        }
        Ok(())
    }
}

/// `alpha = "auto"` or a fixed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSetting {
    Value(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: u64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub alpha: AlphaSetting,
    /// Starting value when `alpha = "auto"`.
    pub alpha_initial: f64,
    pub allow_unlisted_alpha: bool,
    pub critic_hidden: Vec<usize>,
    pub updates_per_step: usize,
    pub eval_interval: u64,
    pub eval_episodes: usize,
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            gamma: 0.98,
            tau: 0.005,
            batch_size: 32,
            buffer_capacity: 100_000,
            warmup_steps: 500,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            alpha: AlphaSetting::Value(0.1),
            alpha_initial: 0.1,
            allow_unlisted_alpha: false,
            critic_hidden: vec![64, 64],
            updates_per_step: 1,
            eval_interval: 1000,
            eval_episodes: 20,
        }
    }
}

impl LearnerSection {
    fn alpha_mode(&self) -> Result<AlphaMode> {
        match &self.alpha {
            AlphaSetting::Named(s) if s == "auto" => {
                if !(self.alpha_initial.is_finite() && self.alpha_initial > 0.0) {
                    return Err(HarnessError::Config(
                        "learner.alpha_initial must be positive".into(),
                    ));
                }
                Ok(AlphaMode::Auto {
                    initial: self.alpha_initial,
                })
            }
            AlphaSetting::Named(s) => Err(HarnessError::Config(format!(
                "learner.alpha: expected \"auto\" or a number, got \"{s}\""
            ))),
            AlphaSetting::Value(v) => {
                let listed = LISTED_ALPHAS.contains(v);
                if !listed && !self.allow_unlisted_alpha {
                    return Err(HarnessError::Config(format!(
                        "learner.alpha = {v} is not one of {LISTED_ALPHAS:?} \
                         (set learner.allow_unlisted_alpha = true to override)"
                    )));
                }
                if !(v.is_finite() && *v >= 0.0) {
                    return Err(HarnessError::Config(format!(
                        "learner.alpha = {v} must be finite and non-negative"
                    )));
                }
                Ok(AlphaMode::Fixed(*v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaSection {
    /// Decay rate of the categorical entropy temperature.
    pub d_e: f64,
    /// Floor the temperature decays to.
    pub c_e: f64,
    pub allow_unlisted_base: bool,
}

impl Default for BetaSection {
    fn default() -> Self {
        Self {
            d_e: 1e-3,
            c_e: 2e-4,
            allow_unlisted_base: false,
        }
    }
}

impl BetaSection {
    fn schedule(&self) -> Result<BetaSchedule> {
        if !LISTED_BETA_BASES.contains(&self.c_e) && !self.allow_unlisted_base {
            return Err(HarnessError::Config(format!(
                "beta.c_e = {} is not one of {LISTED_BETA_BASES:?} \
                 (set beta.allow_unlisted_base = true to override)",
                self.c_e
            )));
        }
        let schedule = BetaSchedule {
            d_e: self.d_e,
            c_e: self.c_e,
        };
        schedule
            .validate()
            .map_err(|e| HarnessError::Config(format!("beta: {e}")))?;
        Ok(schedule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckpointSection {
    /// Steps between periodic checkpoints; 0 keeps only the final one.
    pub interval: u64,
    /// Store the replay buffer so the run can be resumed exactly.
    pub replay: bool,
}

impl Default for CheckpointSection {
    fn default() -> Self {
        Self {
            interval: 10_000,
            replay: true,
        }
    }
}

fn default_steps() -> u64 {
    20_000
}

fn default_method() -> Method {
    Method::KianAce
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub total_steps: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    /// Run directory, relative to the output root unless absolute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Stop once an evaluation reaches this success rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_success: Option<f64>,
    #[serde(default)]
    pub env: EnvSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub learner: LearnerSection,
    #[serde(default)]
    pub beta: BetaSection,
    #[serde(default)]
    pub checkpoint: CheckpointSection,
}

/// A configuration turned into validated core settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRun {
    pub spec: TaskSpec,
    pub kian: KianConfig,
    pub learner: LearnerConfig,
}

impl RunConfig {
    /// Defaults for `task`.
    pub fn new(task: TaskId) -> Self {
        Self {
            task: task.name().to_string(),
            seed: 0,
            total_steps: default_steps(),
            method: default_method(),
            output: None,
            stop_at_success: None,
            env: EnvSection::default(),
            policy: PolicySection::default(),
            learner: LearnerSection::default(),
            beta: BetaSection::default(),
            checkpoint: CheckpointSection::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(format!("cannot write config: {e}")))
    }

    pub fn task_id(&self) -> Result<TaskId> {
        self.task
            .parse()
            .map_err(|_| HarnessError::Config(format!("task: unknown task `{}`", self.task)))
    }

    /// Checks every field and builds the core settings.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let spec = self.env.apply(self.task_id()?)?;
        self.policy.validate()?;
        if self.seed > i64::MAX as u64 || self.total_steps > i64::MAX as u64 {
            // config files store integers as signed 64-bit
            return Err(HarnessError::Config(
                "seed and total_steps must not exceed 2^63 - 1".into(),
            ));
        }
        if let Some(s) = self.stop_at_success {
            if !(0.0..=1.0).contains(&s) {
                return Err(HarnessError::Config(format!(
                    "stop_at_success = {s} must lie in [0, 1]"
                )));
            }
        }
        let beta = match self.method {
            Method::KianAce => Some(self.beta.schedule()?),
            Method::Sac | Method::Kian => None,
        };
        let l = &self.learner;
        let learner = LearnerConfig {
            gamma: l.gamma,
            tau: l.tau,
            batch_size: l.batch_size,
            buffer_capacity: l.buffer_capacity,
            warmup_steps: l.warmup_steps,
            actor_lr: l.actor_lr,
            critic_lr: l.critic_lr,
            alpha_lr: l.alpha_lr,
            alpha: l.alpha_mode()?,
            beta,
            critic_hidden: l.critic_hidden.clone(),
            updates_per_step: l.updates_per_step,
            eval_interval: l.eval_interval,
            eval_episodes: l.eval_episodes,
        };
        learner
            .validate()
            .map_err(|e| HarnessError::Config(format!("learner: {e}")))?;
        if l.critic_hidden.contains(&0) {
            return Err(HarnessError::Config(
                "learner.critic_hidden: zero-width layer".into(),
            ));
        }
        Ok(ResolvedRun {
            spec,
            kian: self.policy.kian_config(),
            learner,
        })
    }

    /// Directory the run writes to under `root`.
    pub fn output_dir(&self, root: &Path) -> PathBuf {
        let name = self.output.clone().unwrap_or_else(|| {
            format!("{}-{}-s{}", self.task, self.method.name(), self.seed)
        });
        root.join(name)
    }
}

/// Output root from `SURGIRL_OUT`, falling back to `runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// One task of a group. Every task after the first names how it is
/// initialized from its predecessor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupTask {
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<u64>,
    /// Overrides the group's `stop_at_success` for this task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_success: Option<f64>,
    /// `KeysOnly`, `KeysAndQuery` or `All`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline: Option<String>,
    /// Owner ids of the keys to copy; every source key when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keys: Option<Vec<String>>,
    #[serde(default)]
    pub expand_with_inner: bool,
    #[serde(default)]
    pub env: EnvSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    /// Task `i` trains with seed `seed + i`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_steps")]
    pub total_steps: u64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_success: Option<f64>,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub learner: LearnerSection,
    #[serde(default)]
    pub beta: BetaSection,
    #[serde(default)]
    pub checkpoint: CheckpointSection,
    pub tasks: Vec<GroupTask>,
}

impl GroupConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Run configuration of task `index`, written to `<name>/<index>-<task>`
    /// under the output root.
    pub fn run_config(&self, index: usize) -> RunConfig {
        let t = &self.tasks[index];
        RunConfig {
            task: t.task.clone(),
            seed: self.seed.saturating_add(index as u64),
            total_steps: t.total_steps.unwrap_or(self.total_steps),
            method: self.method,
            output: Some(format!("{}/{index}-{}", self.name, t.task)),
            stop_at_success: t.stop_at_success.or(self.stop_at_success),
            env: t.env.clone(),
            policy: self.policy.clone(),
            learner: self.learner.clone(),
            beta: self.beta.clone(),
            checkpoint: self.checkpoint.clone(),
        }
    }

    /// Pipeline and key selection of task `index` (> 0). Without an explicit
    /// key list every source key is copied.
    pub fn plan_spec(&self, index: usize) -> Result<(Pipeline, Option<Vec<String>>, bool)> {
        let t = &self.tasks[index];
        let name = t.pipeline.as_deref().ok_or_else(|| {
            HarnessError::Config(format!("tasks[{index}]: missing field `pipeline`"))
        })?;
        let pipeline = Pipeline::parse(name)
            .map_err(|e| HarnessError::Config(format!("tasks[{index}].pipeline: {e}")))?;
        Ok((pipeline, t.keys.clone(), t.expand_with_inner))
    }

    /// Structural checks that need no trained source.
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(HarnessError::Config("group has no tasks".into()));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(HarnessError::Config(format!(
                "name `{}` must be a plain directory name",
                self.name
            )));
        }
        let first = &self.tasks[0];
        if first.pipeline.is_some() || first.keys.is_some() || first.expand_with_inner {
            return Err(HarnessError::Config(
                "tasks[0] trains from scratch and takes no transfer settings".into(),
            ));
        }
        for i in 0..self.tasks.len() {
            self.run_config(i)
                .resolve()
                .map_err(|e| HarnessError::Config(format!("tasks[{i}]: {e}")))?;
            if i > 0 {
                self.plan_spec(i)?;
            }
        }
        Ok(())
    }
}

/// Builds the plan for one edge from its settings and the source policy.
pub fn build_plan(
    pipeline: Pipeline,
    keys: Option<Vec<String>>,
    expand_with_inner: bool,
    source: &surgirl_core::policy::KianPolicy,
) -> TransferPlan {
    let mut plan = TransferPlan::all_keys(pipeline, source);
    if let Some(keys) = keys {
        plan.key_selection = keys;
    }
    plan.expand_with_inner = expand_with_inner;
    plan
}
