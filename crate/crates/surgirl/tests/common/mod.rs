#![allow(dead_code)]

use surgirl::config::{GroupConfig, GroupTask, RunConfig};
use surgirl_core::envs::TaskId;

/// Small networks and short intervals so runs take milliseconds.
pub fn tiny(task: TaskId, seed: u64, steps: u64) -> RunConfig {
    let mut c = RunConfig::new(task);
    c.seed = seed;
    c.total_steps = steps;
    c.policy.inner_hidden = vec![16];
    c.policy.query_hidden = vec![8];
    c.learner.critic_hidden = vec![16];
    c.learner.batch_size = 8;
    c.learner.warmup_steps = 20;
    c.learner.buffer_capacity = 1000;
    c.learner.eval_interval = 50;
    c.learner.eval_episodes = 2;
    c.checkpoint.interval = 0;
    c
}

pub fn tiny_group(name: &str, tasks: &[(TaskId, Option<&str>)], steps: u64) -> GroupConfig {
    let base = tiny(tasks[0].0, 1, steps);
    GroupConfig {
        name: name.to_string(),
        seed: 1,
        total_steps: steps,
        method: base.method,
        stop_at_success: None,
        policy: base.policy,
        learner: base.learner,
        beta: base.beta,
        checkpoint: base.checkpoint,
        tasks: tasks
            .iter()
            .map(|(t, p)| GroupTask {
                task: t.name().to_string(),
                total_steps: None,
                stop_at_success: None,
                pipeline: p.map(str::to_string),
                keys: None,
                expand_with_inner: false,
                env: Default::default(),
            })
            .collect(),
    }
}
