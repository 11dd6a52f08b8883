mod common;

use std::fs;

use surgirl::checkpoint::{read_raw, Checkpoint, MAGIC};
use surgirl::config::RunConfig;
use surgirl::run::{initial_policy, resume, train, FINAL_CHECKPOINT};
use surgirl::HarnessError;
use surgirl_core::envs::{TaskId, TaskSpec};
use surgirl_core::incremental::{expand_knowledge, transfer, Pipeline, TransferPlan};
use surgirl_core::learner::Trainer;

fn trained(task: TaskId, steps: u64) -> (tempfile::TempDir, RunConfig, Checkpoint) {
    let dir = tempfile::tempdir().unwrap();
    let config = common::tiny(task, 4, steps);
    let out = train(&config, dir.path()).unwrap();
    let ckpt = Checkpoint::load(&out.final_checkpoint).unwrap();
    (dir, config, ckpt)
}

#[test]
fn save_load_save_is_byte_identical() {
    let (dir, _, ckpt) = trained(TaskId::NeedlePick, 120);
    assert_eq!(ckpt.state.step, 120);
    assert!(ckpt.state.replay.len() == 120);
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    let hash_a = ckpt.save(&a).unwrap();
    let reloaded = Checkpoint::load(&a).unwrap();
    assert_eq!(reloaded, ckpt);
    let hash_b = reloaded.save(&b).unwrap();
    assert_eq!(hash_a, hash_b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn loaded_checkpoint_continues_like_the_live_trainer() {
    let config = common::tiny(TaskId::NeedleReach, 2, 60);
    let resolved = config.resolve().unwrap();
    let policy = initial_policy(&config, &resolved).unwrap();
    let mut live = Trainer::new(resolved.spec, policy, resolved.learner, config.seed).unwrap();
    live.run(60).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    Checkpoint::from_trainer(&config, &live, true).save(&path).unwrap();
    let mut restored = Checkpoint::load(&path).unwrap().into_trainer().unwrap();
    let a = live.run(80).unwrap();
    let b = restored.run(80).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(live.actor(), restored.actor());
}

#[test]
fn corrupted_parameter_byte_fails_the_hash() {
    let (dir, _, ckpt) = trained(TaskId::NeedleReach, 30);
    let path = dir.path().join("x.ckpt");
    ckpt.save(&path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    let last = bytes.len() - 3;
    bytes[last] ^= 0x01;
    fs::write(&path, bytes).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(HarnessError::HashMismatch { .. })));
}

#[test]
fn truncation_is_reported() {
    let (dir, _, ckpt) = trained(TaskId::NeedleReach, 30);
    let path = dir.path().join("x.ckpt");
    ckpt.save(&path).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(HarnessError::Truncated { .. })));
    let header_only = bytes.iter().position(|&b| b == b'\n').unwrap() + 10;
    fs::write(&path, &bytes[..header_only]).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(HarnessError::Truncated { .. })));
    let mut extra = bytes.clone();
    extra.push(0);
    fs::write(&path, extra).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(HarnessError::Malformed { .. })));
}

#[test]
fn version_is_checked() {
    let (dir, _, ckpt) = trained(TaskId::NeedleReach, 0);
    let path = dir.path().join("x.ckpt");
    ckpt.save(&path).unwrap();
    let bytes = fs::read(&path).unwrap();
    let newline = bytes.iter().position(|&b| b == b'\n').unwrap();
    let mut future = format!("{MAGIC} 2").into_bytes();
    future.extend_from_slice(&bytes[newline..]);
    fs::write(&path, future).unwrap();
    match Checkpoint::load(&path) {
        Err(HarnessError::VersionMismatch { found, expected, .. }) => {
            assert_eq!((found.as_str(), expected), ("2", 1));
        }
        other => panic!("{other:?}"),
    }
    fs::write(&path, b"not a checkpoint\n{}\n").unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(HarnessError::Malformed { .. })));
}

#[test]
fn manifest_describes_the_blocks() {
    let (dir, config, _) = trained(TaskId::BiPegTransfer, 30);
    let raw = read_raw(&config.output_dir(dir.path()).join(FINAL_CHECKPOINT)).unwrap();
    let m = &raw.manifest;
    assert_eq!(m.task, "BiPegTransfer");
    assert_eq!(m.key_owners, ["inner", "approach", "transport", "handover"]);
    assert_eq!(m.knowledge.len(), 3);
    assert_eq!(m.blocks.len(), raw.blocks.len());
    assert_eq!(raw.block("keys").unwrap().len(), 16);
    assert_eq!(m.query.input_dim, 23);
    assert_eq!(m.inner.output_dim, 12);
    assert_eq!(m.config, config);
    let total: usize = m.blocks.iter().map(|b| b.len).sum();
    let file_len = fs::metadata(config.output_dir(dir.path()).join(FINAL_CHECKPOINT)).unwrap().len() as usize;
    assert!(file_len > 8 * total);
}

#[test]
fn replay_can_be_left_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::tiny(TaskId::NeedleReach, 3, 40);
    config.checkpoint.replay = false;
    let out = train(&config, dir.path()).unwrap();
    let ckpt = Checkpoint::load(&out.final_checkpoint).unwrap();
    assert!(!ckpt.resumable);
    assert!(ckpt.state.replay.is_empty());
    assert!(read_raw(&out.final_checkpoint).unwrap().block("replay").is_none());
    assert!(matches!(
        resume(&out.final_checkpoint, dir.path(), Some(80)),
        Err(HarnessError::Config(_))
    ));
}

#[test]
fn learned_knowledge_round_trips() {
    let (dir, config, src) = trained(TaskId::NeedleReach, 60);
    let spec = TaskSpec::new(TaskId::NeedleReach);
    let plan = TransferPlan {
        pipeline: Pipeline::KeysOnly,
        key_selection: vec!["approach".into()],
        expand_with_inner: true,
    };
    let kian = config.policy.kian_config();
    let expanded = transfer(&plan, &spec, &src.policy, &spec, &kian, 8).unwrap();
    assert_eq!(expanded.knowledge_policies().len(), 4);
    let mut target = common::tiny(TaskId::NeedleReach, 8, 0);
    target.output = Some("expanded".into());
    let resolved = target.resolve().unwrap();
    let trainer = Trainer::new(resolved.spec, expanded.clone(), resolved.learner, 8).unwrap();
    let path = dir.path().join("expanded.ckpt");
    Checkpoint::from_trainer(&target, &trainer, true).save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.policy, expanded);
    let raw = read_raw(&path).unwrap();
    let learned = raw.block("knowledge/NeedleReach-inner").unwrap();
    assert_eq!(learned, &src.policy.inner().params[..]);
    // chaining a second expansion keeps the order
    let set = back.policy.knowledge_with_current_keys().unwrap();
    let spec_b = TaskSpec::new(TaskId::NeedleReach);
    let err = expand_knowledge(&set, &spec_b, &back.policy, &spec_b);
    assert!(err.is_err(), "same id cannot be registered twice");
}
