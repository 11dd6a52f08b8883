mod common;

use std::path::Path;

use proptest::prelude::*;
use surgirl::config::{GroupConfig, Method, RunConfig, LISTED_ALPHAS};
use surgirl::HarnessError;
use surgirl_core::envs::TaskId;
use surgirl_core::learner::AlphaMode;

fn config_error(r: surgirl::Result<impl std::fmt::Debug>) -> String {
    match r {
        Err(HarnessError::Config(m)) => m,
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.starts_with("group") {
            GroupConfig::load(&path).unwrap().validate().unwrap();
        } else {
            RunConfig::load(&path).unwrap().resolve().unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 6);
}

#[test]
fn missing_task_is_named() {
    let m = config_error(RunConfig::parse("seed = 3\n"));
    assert!(m.contains("task"), "{m}");
}

#[test]
fn unknown_keys_are_named() {
    let m = config_error(RunConfig::parse("task = \"NeedlePick\"\n[learner]\nbatch = 3\n"));
    assert!(m.contains("batch"), "{m}");
    let m = config_error(RunConfig::parse("task = \"NeedlePick\"\nsteps = 3\n"));
    assert!(m.contains("steps"), "{m}");
}

#[test]
fn unknown_task_is_rejected() {
    let c = RunConfig::parse("task = \"NeedleJuggle\"\n").unwrap();
    let m = config_error(c.resolve());
    assert!(m.contains("NeedleJuggle"), "{m}");
}

#[test]
fn dotted_keys_match_sections() {
    let a = RunConfig::parse("task = \"NeedlePick\"\nlearner.batch_size = 16\nbeta.d_e = 0.01\n").unwrap();
    let b = RunConfig::parse("task = \"NeedlePick\"\n[learner]\nbatch_size = 16\n[beta]\nd_e = 0.01\n").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.learner.batch_size, 16);
}

#[test]
fn defaults_resolve() {
    let c = RunConfig::parse("task = \"NeedlePick\"\n").unwrap();
    assert_eq!(c.method, Method::KianAce);
    let r = c.resolve().unwrap();
    assert_eq!(r.learner.alpha, AlphaMode::Fixed(0.1));
    assert_eq!(r.kian.key_dim, 4);
    let beta = r.learner.beta.unwrap();
    assert_eq!((beta.d_e, beta.c_e), (1e-3, 2e-4));
}

#[test]
fn methods_set_the_entropy_bonus() {
    for (method, has_beta) in [("sac", false), ("kian", false), ("kian-ace", true)] {
        let c = RunConfig::parse(&format!("task = \"NeedlePick\"\nmethod = \"{method}\"\n")).unwrap();
        assert_eq!(c.resolve().unwrap().learner.beta.is_some(), has_beta, "{method}");
    }
    config_error(RunConfig::parse("task = \"NeedlePick\"\nmethod = \"ppo\"\n"));
}

#[test]
fn alpha_settings() {
    let base = "task = \"NeedlePick\"\n[learner]\n";
    let auto = RunConfig::parse(&format!("{base}alpha = \"auto\"\nalpha_initial = 0.5\n")).unwrap();
    assert_eq!(auto.resolve().unwrap().learner.alpha, AlphaMode::Auto { initial: 0.5 });
    for v in LISTED_ALPHAS {
        let c = RunConfig::parse(&format!("{base}alpha = {v:e}\n")).unwrap();
        assert_eq!(c.resolve().unwrap().learner.alpha, AlphaMode::Fixed(v));
    }
    let m = config_error(RunConfig::parse(&format!("{base}alpha = 0.2\n")).unwrap().resolve());
    assert!(m.contains("learner.alpha"), "{m}");
    let ok = RunConfig::parse(&format!("{base}alpha = 0.0\nallow_unlisted_alpha = true\n")).unwrap();
    assert_eq!(ok.resolve().unwrap().learner.alpha, AlphaMode::Fixed(0.0));
    config_error(RunConfig::parse(&format!("{base}alpha = -1.0\nallow_unlisted_alpha = true\n")).unwrap().resolve());
    config_error(RunConfig::parse(&format!("{base}alpha = \"sometimes\"\n")).unwrap().resolve());
}

#[test]
fn beta_base_is_restricted() {
    let m = config_error(RunConfig::parse("task = \"NeedlePick\"\n[beta]\nc_e = 0.5\n").unwrap().resolve());
    assert!(m.contains("beta.c_e"), "{m}");
    RunConfig::parse("task = \"NeedlePick\"\n[beta]\nc_e = 0.5\nallow_unlisted_base = true\n")
        .unwrap()
        .resolve()
        .unwrap();
    RunConfig::parse("task = \"NeedlePick\"\n[beta]\nc_e = 0.0\n").unwrap().resolve().unwrap();
    config_error(RunConfig::parse("task = \"NeedlePick\"\n[beta]\nd_e = -1.0\n").unwrap().resolve());
}

#[test]
fn env_overrides_are_checked() {
    let c = RunConfig::parse("task = \"NeedlePick\"\n[env]\nc_og = 0\nhorizon = 80\n").unwrap();
    let spec = c.resolve().unwrap().spec;
    assert_eq!((spec.coefficients.c_og, spec.horizon), (0.0, 80));
    for bad in ["c_og = 0.5", "p = 1", "grasp_threshold = 0.5", "horizon = 0", "goal_tolerance = 0"] {
        let c = RunConfig::parse(&format!("task = \"NeedlePick\"\n[env]\n{bad}\n")).unwrap();
        let m = config_error(c.resolve());
        assert!(m.starts_with("env"), "{bad}: {m}");
    }
}

#[test]
fn learner_ranges_are_checked() {
    for bad in ["gamma = 1.5", "tau = 0", "batch_size = 0", "eval_episodes = 0", "critic_hidden = [0]"] {
        let c = RunConfig::parse(&format!("task = \"NeedlePick\"\n[learner]\n{bad}\n")).unwrap();
        config_error(c.resolve());
    }
    for bad in ["key_dim = 0", "temperature = 0", "inner_hidden = [8, 0]"] {
        let c = RunConfig::parse(&format!("task = \"NeedlePick\"\n[policy]\n{bad}\n")).unwrap();
        config_error(c.resolve());
    }
    let c = RunConfig::parse("task = \"NeedlePick\"\nstop_at_success = 1.5\n").unwrap();
    config_error(c.resolve());
}

#[test]
fn serialized_configs_parse_back() {
    let mut c = common::tiny(TaskId::BiPegTransfer, 9, 123);
    c.env.c_rg = Some(1.0);
    c.stop_at_success = Some(0.8);
    c.output = Some("x/y".into());
    assert_eq!(RunConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
}

#[test]
fn group_structure_is_checked() {
    let ok = common::tiny_group("g", &[(TaskId::StaticTrack, None), (TaskId::ActiveTrack, Some("All"))], 10);
    ok.validate().unwrap();
    let run = ok.run_config(1);
    assert_eq!(run.seed, 2);
    assert_eq!(run.output.as_deref(), Some("g/1-ActiveTrack"));

    let first_with_plan = common::tiny_group("g", &[(TaskId::StaticTrack, Some("All"))], 10);
    config_error(first_with_plan.validate());
    let missing = common::tiny_group("g", &[(TaskId::StaticTrack, None), (TaskId::ActiveTrack, None)], 10);
    assert!(config_error(missing.validate()).contains("pipeline"));
    let unknown = common::tiny_group("g", &[(TaskId::StaticTrack, None), (TaskId::ActiveTrack, Some("Most"))], 10);
    config_error(unknown.validate());
    let empty = common::tiny_group("g", &[(TaskId::StaticTrack, None)], 10);
    let mut empty = empty;
    empty.tasks.clear();
    config_error(empty.validate());
    let mut slashed = ok.clone();
    slashed.name = "a/b".into();
    config_error(slashed.validate());
}

#[test]
fn seeds_beyond_signed_range_are_rejected() {
    let mut c = RunConfig::new(TaskId::NeedleReach);
    c.seed = i64::MAX as u64 + 1;
    config_error(c.resolve());
}

proptest! {
    #[test]
    fn unlisted_alphas_need_the_override(v in 0.0f64..2.0) {
        prop_assume!(!LISTED_ALPHAS.contains(&v));
        let mut c = RunConfig::new(TaskId::NeedleReach);
        c.learner.alpha = surgirl::config::AlphaSetting::Value(v);
        prop_assert!(matches!(c.resolve(), Err(HarnessError::Config(_))));
        c.learner.allow_unlisted_alpha = true;
        prop_assert_eq!(c.resolve().unwrap().learner.alpha, AlphaMode::Fixed(v));
    }

    #[test]
    fn toml_round_trip(seed in 0..=i64::MAX as u64, steps in 0u64..1_000_000, d_e in 0.0f64..1.0, batch in 1usize..512) {
        let mut c = RunConfig::new(TaskId::PegTransfer);
        c.seed = seed;
        c.total_steps = steps;
        c.beta.d_e = d_e;
        c.learner.batch_size = batch;
        prop_assert_eq!(RunConfig::parse(&c.to_toml().unwrap()).unwrap(), c);
    }
}
