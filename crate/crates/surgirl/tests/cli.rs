mod common;

use std::path::Path;
use std::process::{Command, Output};

use surgirl_core::envs::TaskId;

fn surgirl(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surgirl"))
        .env("SURGIRL_OUT", out)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_inspect_eval_resume() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = common::tiny(TaskId::NeedleReach, 3, 100);
    config.checkpoint.interval = 50;
    let path = dir.path().join("run.toml");
    std::fs::write(&path, config.to_toml().unwrap()).unwrap();

    let o = surgirl(dir.path(), &["train", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run_dir = config.output_dir(dir.path());
    let final_ckpt = run_dir.join("final.ckpt");
    assert!(final_ckpt.exists());

    let o = surgirl(dir.path(), &["inspect", final_ckpt.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("NeedleReach") && text.contains("inner"), "{text}");

    let o = surgirl(dir.path(), &["eval", final_ckpt.to_str().unwrap(), "NeedleReach", "--episodes", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("success_rate"));
    assert!(run_dir.join("eval-NeedleReach-s0.csv").exists());

    let mid = run_dir.join("checkpoints/step-00000050.ckpt");
    let o = surgirl(dir.path(), &["train", "--resume", mid.to_str().unwrap(), "--steps", "150"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("step 150"));
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "task = \"NeedleReach\"\n[learner]\nalpha = 0.5\n").unwrap();
    let o = surgirl(dir.path(), &["train", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learner.alpha"), "{}", stderr(&o));

    std::fs::write(&bad, "seed = 1\n").unwrap();
    let o = surgirl(dir.path(), &["train", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("task"));

    let group = common::tiny_group(
        "bad",
        &[(TaskId::NeedleReach, None), (TaskId::MisOrient, Some("All"))],
        10,
    );
    let gpath = dir.path().join("group.toml");
    std::fs::write(&gpath, toml::to_string(&group).unwrap()).unwrap();
    let o = surgirl(dir.path(), &["transfer", gpath.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!dir.path().join("bad").exists());
}

#[test]
fn runtime_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.ckpt");
    let o = surgirl(dir.path(), &["inspect", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let garbage = dir.path().join("garbage.ckpt");
    std::fs::write(&garbage, b"hello").unwrap();
    let o = surgirl(dir.path(), &["eval", garbage.to_str().unwrap(), "NeedleReach"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn transfer_runs_a_group() {
    let dir = tempfile::tempdir().unwrap();
    let group = common::tiny_group(
        "track",
        &[(TaskId::StaticTrack, None), (TaskId::ActiveTrack, Some("All"))],
        30,
    );
    let gpath = dir.path().join("group.toml");
    std::fs::write(&gpath, toml::to_string(&group).unwrap()).unwrap();
    let o = surgirl(dir.path(), &["transfer", gpath.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().count(), 3);
    assert!(dir.path().join("track/lineage.json").exists());
    assert!(dir.path().join("track/1-ActiveTrack/final.ckpt").exists());
}
