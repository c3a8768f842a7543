use std::path::Path;
use std::process::{Command, Output};

use apg_cli::commands::{rate_into, resolve_config};
use apg_cli::config::{PolicyConfig, RunConfig};
use apg_cli::experiment::{build_policy, equilibrium_control};
use apg_cli::output::RunManifest;
use apg_cli::{presets, CliError};
use apg_core::dynamics::AnalyticDynamics;
use apg_core::env::{LanderLite, LanderParams};
use serde_json::Value;

fn apg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apg")).args(args).output().expect("spawn apg")
}

fn preset_json(name: &str) -> Value {
    serde_json::from_str(presets::get(name).unwrap()).unwrap()
}

/// The LQ benchmark cut down to a few episodes.
fn short_lq(episodes: u64) -> Value {
    let mut v = preset_json("lq-rate");
    v["trainer"]["adapt"]["episodes"] = episodes.into();
    v
}

fn write_json(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn every_preset_loads() {
    for name in presets::names() {
        let cfg = resolve_config(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.trainer.adapt.episodes > 0);
    }
}

#[test]
fn unknown_keys_are_rejected() {
    for path in [&["trainer", "adapt"][..], &["env"], &["critic"], &[]] {
        let mut v = preset_json("cartpole-oc");
        let mut node = &mut v;
        for key in path {
            node = &mut node[*key];
        }
        node["alpha_thetta"] = 0.1.into();
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, CliError::Config(_)), "{path:?}");
        assert!(err.to_string().contains("alpha_thetta"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }
}

#[test]
fn step_ordering_is_checked_at_load() {
    let mut v = preset_json("lander-switch");
    v["trainer"]["adapt"]["alpha_theta"]["initial"] = 2.0.into();
    let err = RunConfig::from_json(&v.to_string()).unwrap_err();
    assert!(err.to_string().contains("alpha_w > alpha_theta"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn learned_source_requires_a_model() {
    let mut v = preset_json("cartpole-rl");
    v["dynamics"] = serde_json::json!({});
    let err = RunConfig::from_json(&v.to_string()).unwrap_err();
    assert!(err.to_string().contains("dynamics.model"), "{err}");
}

#[test]
fn hash_ignores_key_order_but_not_values() {
    let v = preset_json("cartpole-oc");
    let obj = v.as_object().unwrap();
    let reversed: Vec<String> = obj.iter().rev().map(|(k, x)| format!("\"{k}\": {x}")).collect();
    let text = format!("{{{}}}", reversed.join(", "));
    let a = RunConfig::from_json(&v.to_string()).unwrap();
    let b = RunConfig::from_json(&text).unwrap();
    assert_eq!(a.hash(), b.hash());

    let mut changed = v.clone();
    changed["trainer"]["adapt"]["gamma"] = 0.9.into();
    assert_ne!(a.hash(), RunConfig::from_json(&changed.to_string()).unwrap().hash());
}

#[test]
fn seed_override_reaches_every_stage() {
    let cfg = resolve_config("cartpole-rl").unwrap().with_seed(42);
    assert_eq!(cfg.trainer.seed, 42);
    assert!(cfg.stages().all(|(_, c)| c.seed == 42 && c.refit.seed == 42));
    assert_eq!(cfg.dynamics.model.as_ref().unwrap().fit.seed, 42);
}

#[test]
fn equilibrium_control_is_hover_thrust() {
    let env = LanderLite::new(LanderParams::default()).unwrap();
    let u = equilibrium_control(&AnalyticDynamics(&env), &env.landing_target(), 2).unwrap();
    for v in u {
        assert!((v - env.hover_thrust()).abs() < 1e-9);
    }
}

#[test]
fn anchored_arm_policy_holds_the_goal() {
    let cfg = resolve_config("arm-obstacle").unwrap();
    let PolicyConfig::Lqr(l) = &cfg.policy else { panic!() };
    assert!(l.anchored);
    let env = cfg.env.build().unwrap();
    let policy = build_policy(&cfg, env.as_ref(), None).unwrap();
    let goal = apg_cli::experiment::goal_state(&cfg.env).unwrap();
    let u = policy.act(&goal).unwrap();
    assert!(u.iter().all(|v| v.abs() < 1e-12), "{u:?}");
    let next = env.step(&goal, &u).unwrap().next_state;
    assert!(next.iter().zip(&goal).all(|(a, b)| (a - b).abs() < 1e-12));
}

#[test]
fn run_writes_logs_manifest_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "lq.json", &short_lq(4));
    let out = dir.path().join("run");
    let res = apg(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["iterations.csv", "episodes.csv", "manifest.json", "checkpoints/policy.ckpt", "checkpoints/trainer.ckpt"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let episodes = std::fs::read_to_string(out.join("episodes.csv")).unwrap();
    assert!(!episodes.contains('\r'));
    let lines: Vec<&str> = episodes.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].ends_with(','), "wall_ms stays empty: {}", lines[1]);

    let manifest = RunManifest::read(&out.join("manifest.json")).unwrap();
    let loaded: RunConfig = serde_json::from_value(manifest.config.clone()).unwrap();
    assert_eq!(manifest.config_hash, loaded.hash());
    assert_eq!(manifest.seed, 0);
    assert_eq!(manifest.outputs["iterations"], "iterations.csv");
    assert!(manifest.started_at <= manifest.finished_at);
    assert_eq!(loaded.trainer.adapt.episodes, 4);
    // defaults are spelled out
    assert!(manifest.config["trainer"]["adapt"].get("refit_every").is_some());
}

#[test]
fn seeds_run_in_separate_directories() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_json(dir.path(), "lq.json", &short_lq(3));
    let out = dir.path().join("multi");
    let res = Command::new(env!("CARGO_BIN_EXE_apg"))
        .args(["run", &cfg, "--out", out.to_str().unwrap(), "--seeds", "3,7"])
        .env("APG_THREADS", "2")
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let a = std::fs::read(out.join("seed-3/episodes.csv")).unwrap();
    let b = std::fs::read(out.join("seed-7/episodes.csv")).unwrap();
    assert_ne!(a, b);
    let m = RunManifest::read(&out.join("seed-7/manifest.json")).unwrap();
    assert_eq!(m.seed, 7);
    assert_eq!(m.config["trainer"]["adapt"]["seed"], 7);
}

#[test]
fn numerical_blow_up_exits_3_with_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = short_lq(20);
    v["trainer"]["adapt"]["alpha_w"]["initial"] = 1e6.into();
    v["trainer"]["adapt"]["alpha_theta"]["initial"] = 1e3.into();
    let cfg = write_json(dir.path(), "wild.json", &v);
    let res = apg(&["run", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert_eq!(res.status.code(), Some(3), "{stderr}");
    assert!(stderr.contains("iteration"), "{stderr}");
}

#[test]
fn missing_config_exits_2() {
    let res = apg(&["run", "/nonexistent/config.json"]);
    assert_eq!(res.status.code(), Some(2));
}

fn planted_log(dir: &Path, n: usize) -> std::path::PathBuf {
    let mut text = String::from("i,L1,L2,grad_norm_sq,alpha_w,alpha_theta\n");
    for i in 0..n {
        text.push_str(&format!("{i},0,0,{},0.1,0.01\n", 1.0 / (i + 1) as f64));
    }
    let p = dir.join("iterations.csv");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn rate_recovers_planted_slope() {
    let dir = tempfile::tempdir().unwrap();
    let log = planted_log(dir.path(), 10_000);
    let res = apg(&["rate", log.to_str().unwrap(), "--grid", "100,300,1000,3000,10000"]);
    assert!(res.status.success());
    let slope: f64 = String::from_utf8_lossy(&res.stdout).trim().parse().unwrap();
    assert!((slope + 1.0).abs() < 1e-6, "{slope}");
    let json: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rate.json")).unwrap()).unwrap();
    for key in ["slope", "intercept", "grid", "running_min"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn rate_rejects_single_point_and_short_logs() {
    let dir = tempfile::tempdir().unwrap();
    let log = planted_log(dir.path(), 500);
    let single = apg(&["rate", log.to_str().unwrap(), "--grid", "10"]);
    assert_eq!(single.status.code(), Some(2));
    let short = apg(&["rate", log.to_str().unwrap()]);
    assert_eq!(short.status.code(), Some(2));
    assert!(matches!(rate_into(&log, &[10, 1000], None), Err(CliError::Input(_))));
}

#[test]
fn verify_creates_directory_and_catches_sign_flip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/verify");
    let res = apg(&["verify", "--out", out.to_str().unwrap(), "--inject-fault", "flip-grad-l2-sign"]);
    assert_eq!(res.status.code(), Some(1));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    let failed: Vec<&Value> = report["checks"].as_array().unwrap().iter().filter(|c| c["passed"] == false).collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["suite"], "gradient_fidelity");
}
