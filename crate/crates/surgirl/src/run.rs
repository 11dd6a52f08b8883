//! Training, resumption, evaluation and group runs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use surgirl_core::envs::{TaskId, TaskSpec};
use surgirl_core::incremental::{transfer, LineageEntry, LineageRecord};
use surgirl_core::knowledge::KnowledgeSet;
use surgirl_core::learner::{evaluate, EvalSummary, MetricsRow, Trainer};
use surgirl_core::policy::KianPolicy;
use surgirl_core::rng::{stream, Stream};

use crate::checkpoint::{file_hash, Checkpoint};
use crate::config::{build_plan, GroupConfig, Method, ResolvedRun, RunConfig};
use crate::error::{HarnessError, Result};
use crate::metrics::{write_episodes, write_trajectory, MetricsWriter};

pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const LINEAGE_FILE: &str = "lineage.json";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub final_checkpoint: PathBuf,
    /// Parameter hash of the final checkpoint.
    pub hash: String,
    /// Rows logged by this invocation.
    pub rows: Vec<MetricsRow>,
}

/// Untrained policy of a run: scripted knowledge unless the method is plain SAC.
pub fn initial_policy(config: &RunConfig, resolved: &ResolvedRun) -> Result<KianPolicy> {
    let key_dim = resolved.kian.key_dim;
    let set = if config.method.uses_knowledge() {
        KnowledgeSet::scripted(key_dim, &mut stream(config.seed, Stream::InitKnowledgeKeys))?
    } else {
        KnowledgeSet::empty(key_dim)
    };
    Ok(KianPolicy::new(&resolved.spec, set, &resolved.kian, config.seed)?)
}

/// Trains from scratch into `config.output_dir(root)`.
pub fn train(config: &RunConfig, root: &Path) -> Result<TrainOutcome> {
    let resolved = config.resolve()?;
    let policy = initial_policy(config, &resolved)?;
    train_policy(config, &resolved, policy, root)
}

/// Trains `policy`, which must match the task of `config`.
pub fn train_policy(
    config: &RunConfig,
    resolved: &ResolvedRun,
    policy: KianPolicy,
    root: &Path,
) -> Result<TrainOutcome> {
    let knowledge = policy.knowledge_policies().len();
    let trainer = Trainer::new(
        resolved.spec.clone(),
        policy,
        resolved.learner.clone(),
        config.seed,
    )?;
    let dir = config.output_dir(root);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let config_path = dir.join("config.toml");
    fs::write(&config_path, config.to_toml()?).map_err(|e| HarnessError::io(&config_path, e))?;
    let metrics = MetricsWriter::create(&dir.join(METRICS_FILE), knowledge)?;
    drive(config, resolved, trainer, metrics, dir)
}

/// Continues the run saved in `checkpoint`, optionally to a new step budget.
/// Output goes to the run directory recorded in the checkpoint, under `root`.
pub fn resume(checkpoint: &Path, root: &Path, total_steps: Option<u64>) -> Result<TrainOutcome> {
    let ckpt = Checkpoint::load(checkpoint)?;
    if !ckpt.resumable {
        return Err(HarnessError::Config(format!(
            "{}: saved without its replay buffer, so it cannot be resumed exactly",
            checkpoint.display()
        )));
    }
    let mut config = ckpt.config.clone();
    if let Some(t) = total_steps {
        config.total_steps = t;
    }
    let resolved = config.resolve()?;
    let step = ckpt.state.step;
    let knowledge = ckpt.policy.knowledge_policies().len();
    let trainer = ckpt.into_trainer()?;
    let dir = config.output_dir(root);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let metrics = MetricsWriter::resume(&dir.join(METRICS_FILE), knowledge, step)?;
    drive(&config, &resolved, trainer, metrics, dir)
}

fn drive(
    config: &RunConfig,
    resolved: &ResolvedRun,
    mut trainer: Trainer<KianPolicy>,
    mut metrics: MetricsWriter,
    dir: PathBuf,
) -> Result<TrainOutcome> {
    let resumable = config.checkpoint.replay;
    let interval = config.checkpoint.interval;
    let ckpt_dir = dir.join("checkpoints");
    let mut rows = Vec::new();
    let mut body = |trainer: &mut Trainer<KianPolicy>| -> Result<()> {
        while trainer.step_count() < config.total_steps {
            let row = trainer.step()?;
            let step = trainer.step_count();
            if interval > 0 && step.is_multiple_of(interval) {
                Checkpoint::from_trainer(config, trainer, resumable)
                    .save(&ckpt_dir.join(format!("step-{step:08}.ckpt")))?;
            }
            if let Some(row) = row {
                metrics.append(&row)?;
                let stop = config
                    .stop_at_success
                    .is_some_and(|s| row.success_rate >= s);
                rows.push(row);
                if stop {
                    break;
                }
            }
        }
        Ok(())
    };
    if let Err(e) = body(&mut trainer) {
        // best effort: keep the last consistent state around for inspection
        let _ = Checkpoint::from_trainer(config, &trainer, resumable)
            .save(&ckpt_dir.join(format!("abort-{:08}.ckpt", trainer.step_count())));
        return Err(e);
    }
    let final_checkpoint = dir.join(FINAL_CHECKPOINT);
    let hash = Checkpoint::from_trainer(config, &trainer, resumable).save(&final_checkpoint)?;
    if config.env.trajectory_dump {
        let summary = evaluate(
            trainer.actor(),
            &resolved.spec,
            resolved.learner.eval_episodes,
            config.seed,
            true,
        )?;
        write_trajectory(&dir.join("trajectory.csv"), &summary)?;
    }
    Ok(TrainOutcome {
        dir,
        final_checkpoint,
        hash,
        rows,
    })
}

/// Greedy evaluation of a checkpoint on `task`. The checkpoint's own task
/// keeps its configured overrides; other tasks use their defaults.
pub fn eval_checkpoint(
    checkpoint: &Checkpoint,
    task: TaskId,
    episodes: usize,
    seed: u64,
    record: bool,
) -> Result<EvalSummary> {
    let spec = if checkpoint.config.task_id()? == task {
        checkpoint.config.env.apply(task)?
    } else {
        TaskSpec::new(task)
    };
    let p = &checkpoint.policy;
    if (p.obs_dim(), p.action_dim()) != (spec.obs_dim, spec.action_dim) {
        return Err(HarnessError::Config(format!(
            "checkpoint acts on {}-d observations with {}-d actions; {task} has {} and {}",
            p.obs_dim(),
            p.action_dim(),
            spec.obs_dim,
            spec.action_dim
        )));
    }
    if episodes == 0 {
        return Err(HarnessError::Config("episodes must be positive".into()));
    }
    Ok(evaluate(p, &spec, episodes, seed, record)?)
}

/// Evaluates and writes the per-episode CSV (and the trajectory when asked).
pub fn eval_to_files(
    checkpoint: &Checkpoint,
    task: TaskId,
    episodes: usize,
    seed: u64,
    episodes_csv: &Path,
    trajectory_csv: Option<&Path>,
) -> Result<EvalSummary> {
    let summary = eval_checkpoint(checkpoint, task, episodes, seed, trajectory_csv.is_some())?;
    write_episodes(episodes_csv, &summary)?;
    if let Some(path) = trajectory_csv {
        write_trajectory(path, &summary)?;
    }
    Ok(summary)
}

/// Untrained checkpoint whose mixture always selects the scripted policy
/// `id`, so greedy evaluation runs that controller unchanged.
pub fn scripted_checkpoint(task: TaskId, id: &str, seed: u64) -> Result<Checkpoint> {
    let mut config = RunConfig::new(task);
    config.method = Method::Kian;
    config.seed = seed;
    config.total_steps = 0;
    config.policy.query_hidden = Vec::new();
    let resolved = config.resolve()?;
    let mut policy = initial_policy(&config, &resolved)?;
    let favored = (0..policy.components())
        .find(|&j| policy.key_owner(j) == id)
        .ok_or_else(|| HarnessError::Config(format!("no scripted policy `{id}`")))?;
    let d = policy.key_dim();
    let m = policy.components();
    let [_, query, keys] = policy.param_blocks_mut();
    // a linear query with output e_1 everywhere, against keys ±1000·e_1
    query.iter_mut().for_each(|v| *v = 0.0);
    let n = query.len();
    query[n - d] = 1.0;
    keys.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..m {
        keys[d * j] = if j == favored { 1000.0 } else { -1000.0 };
    }
    let trainer = Trainer::new(resolved.spec, policy, resolved.learner, seed)?;
    Ok(Checkpoint::from_trainer(&config, &trainer, true))
}

#[derive(Debug, Clone, Serialize)]
struct PlanJson {
    pipeline: String,
    keys: Vec<String>,
    expand_with_inner: bool,
}

#[derive(Debug, Clone, Serialize)]
struct LineageEntryJson {
    task: String,
    checkpoint: String,
    hash: String,
    plan: Option<PlanJson>,
}

#[derive(Debug, Clone, Serialize)]
struct LineageJson {
    name: String,
    entries: Vec<LineageEntryJson>,
}

fn write_lineage(path: &Path, name: &str, record: &LineageRecord, files: &[String]) -> Result<()> {
    let json = LineageJson {
        name: name.to_string(),
        entries: record
            .entries()
            .iter()
            .zip(files)
            .map(|(e, file)| LineageEntryJson {
                task: e.task.name().to_string(),
                checkpoint: file.clone(),
                hash: e.checkpoint_hash.clone(),
                plan: e.plan.as_ref().map(|p| PlanJson {
                    pipeline: p.pipeline.name().to_string(),
                    keys: p.key_selection.clone(),
                    expand_with_inner: p.expand_with_inner,
                }),
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&json).expect("lineage always serializes");
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone)]
pub struct GroupOutcome {
    pub lineage: LineageRecord,
    pub lineage_path: PathBuf,
    pub runs: Vec<TrainOutcome>,
}

fn in_task<T>(index: usize, task: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| HarnessError::Group {
        index,
        task: task.to_string(),
        source: Box::new(e),
    })
}

/// Walks the group with untrained policies so every plan is checked against
/// its real source layout before any training starts.
fn dry_run(group: &GroupConfig) -> Result<()> {
    let mut prev: Option<(TaskSpec, KianPolicy)> = None;
    for (i, t) in group.tasks.iter().enumerate() {
        let step = || -> Result<(TaskSpec, KianPolicy)> {
            let config = group.run_config(i);
            let resolved = config.resolve()?;
            let policy = match &prev {
                None => initial_policy(&config, &resolved)?,
                Some((src_spec, src)) => {
                    let (pipeline, keys, expand) = group.plan_spec(i)?;
                    let plan = build_plan(pipeline, keys, expand, src);
                    transfer(&plan, src_spec, src, &resolved.spec, &resolved.kian, config.seed)?
                }
            };
            Ok((resolved.spec, policy))
        };
        prev = Some(in_task(i, &t.task, step())?);
    }
    Ok(())
}

/// Trains the first task from scratch and each later task from its
/// predecessor's final checkpoint. The lineage file is rewritten after every
/// task, so a failure leaves the completed part on disk.
pub fn run_group(group: &GroupConfig, root: &Path) -> Result<GroupOutcome> {
    group.validate()?;
    dry_run(group)?;
    let group_dir = root.join(&group.name);
    fs::create_dir_all(&group_dir).map_err(|e| HarnessError::io(&group_dir, e))?;
    let lineage_path = group_dir.join(LINEAGE_FILE);
    let mut lineage = LineageRecord::new();
    let mut files = Vec::new();
    let mut runs: Vec<TrainOutcome> = Vec::new();
    for (i, t) in group.tasks.iter().enumerate() {
        let config = group.run_config(i);
        let result = (|| -> Result<(TrainOutcome, Option<_>)> {
            let resolved = config.resolve()?;
            match runs.last() {
                None => Ok((train(&config, root)?, None)),
                Some(prev) => {
                    let source_path = &prev.final_checkpoint;
                    let before = file_hash(source_path)?;
                    let source = Checkpoint::load(source_path)?;
                    let src_spec = source.config.env.apply(source.config.task_id()?)?;
                    let (pipeline, keys, expand) = group.plan_spec(i)?;
                    let plan = build_plan(pipeline, keys, expand, &source.policy);
                    let policy = transfer(
                        &plan,
                        &src_spec,
                        &source.policy,
                        &resolved.spec,
                        &resolved.kian,
                        config.seed,
                    )?;
                    let outcome = train_policy(&config, &resolved, policy, root)?;
                    if file_hash(source_path)? != before {
                        return Err(HarnessError::Malformed {
                            path: source_path.clone(),
                            reason: "source checkpoint changed during transfer".into(),
                        });
                    }
                    Ok((outcome, Some(plan)))
                }
            }
        })();
        let (outcome, plan) = match in_task(i, &t.task, result) {
            Ok(v) => v,
            Err(e) => {
                write_lineage(&lineage_path, &group.name, &lineage, &files)?;
                return Err(e);
            }
        };
        lineage.push(LineageEntry {
            task: config.task_id()?,
            checkpoint_hash: file_hash(&outcome.final_checkpoint)?,
            plan,
        });
        let rel = outcome
            .final_checkpoint
            .strip_prefix(&group_dir)
            .unwrap_or(&outcome.final_checkpoint);
        files.push(rel.to_string_lossy().into_owned());
        write_lineage(&lineage_path, &group.name, &lineage, &files)?;
        runs.push(outcome);
    }
    Ok(GroupOutcome {
        lineage,
        lineage_path,
        runs,
    })
}
