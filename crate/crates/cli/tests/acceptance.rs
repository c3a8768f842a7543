//! Acceptance suite. Each criterion prints one PASS/FAIL line; the target
//! fails if any criterion does.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use apg_cli::commands::resolve_config;
use apg_cli::experiment;
use apg_cli::output::{EPISODE_COLUMNS, ITERATION_COLUMNS};
use apg_cli::{RunConfig, RunOutput};
use apg_core::actor::{ExplorationNoise, Policy};
use apg_core::critic::{grad_l1, update_w, TdGradient, ValueFn};
use apg_core::env::{CostKind, Env, EnvConfig, LinearQuadratic, LinearQuadraticParams, PlanarArm2Link};
use apg_core::lqr::{policy_value_matrix, solve_dare};
use apg_core::num::Mat;
use apg_core::trainer::{collect_transitions, lqr_policy, rate_diagnostic, EpisodeRecord};
use apg_core::verify::{self, Mutation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn preset_run(name: &str) -> (RunConfig, RunOutput) {
    let cfg = resolve_config(name).expect("preset parses");
    let cfg = cfg.with_seed(cfg.trainer.seed);
    let out = experiment::run(&cfg, None).expect("preset runs");
    (cfg, out)
}

fn tail(eps: &[EpisodeRecord], k: usize) -> &[EpisodeRecord] {
    &eps[eps.len().saturating_sub(k)..]
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

fn critic_gradient() -> Outcome {
    let t = Instant::now();
    let c = verify::critic_gradient(100, 101);
    let e = t.elapsed();
    outcome(
        c.passed && c.metric < 1e-4 && within(e, 10.0),
        format!("max rel err {:.2e} (< 1e-4) over 100 cases, {:.2?} (< 10 s)", c.metric, e),
    )
}

fn actor_gradient() -> Outcome {
    let t = Instant::now();
    let c = verify::actor_gradient(100, 102, Mutation::None);
    let e = t.elapsed();
    outcome(
        c.passed && c.metric < 1e-4 && within(e, 10.0),
        format!("max rel err {:.2e} (< 1e-4) over 100 cases, {:.2?} (< 10 s)", c.metric, e),
    )
}

fn riccati() -> Outcome {
    let one = Mat::identity(1);
    let sol = solve_dare(&one, &one, &one, &one, 1.0, 1e-15, 10_000).expect("scalar DARE");
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let dp = (sol.p.get(0, 0) - phi).abs();
    let dk = (sol.k.get(0, 0) - 2.0 / (1.0 + 5f64.sqrt())).abs();
    let random = verify::riccati_random(20, 103);
    outcome(
        dp < 1e-8 && dk < 1e-8 && random.passed && random.metric < 1e-9,
        format!("|P-phi| {dp:.1e}, |K-1/phi| {dk:.1e} (< 1e-8); 20 random systems max residual {:.1e} (< 1e-9)", random.metric),
    )
}

fn td_fixed_point() -> Outcome {
    let t = Instant::now();
    let params = LinearQuadraticParams {
        x0: vec![0.0, 0.0],
        reset_noise: vec![2.0, 2.0],
        ..LinearQuadraticParams::default()
    };
    let env = LinearQuadratic::new(params).expect("LQ env");
    let gamma = 0.95;
    let policy = lqr_policy(env.a(), env.b(), env.q(), env.r(), 1.0, &[0.0, 0.0], &[0.0]).expect("LQR");
    let Policy::Linear(lf) = &policy else { unreachable!() };
    let p_true = policy_value_matrix(env.a(), env.b(), env.q_c(), env.r_c(), lf.gain(), gamma, 1e-14, 100_000)
        .expect("Lyapunov");
    let data = collect_transitions(&env, Some(&policy), CostKind::Additional, &ExplorationNoise::off(), 1000, 20, 104)
        .expect("transitions");

    let mut critic = ValueFn::quadratic(vec![1.0, 1.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let batch_size = 64;
    for _ in 0..100_000 {
        let batch: Vec<_> = (0..batch_size).map(|_| &data[rng.random_range(0..data.len())]).collect();
        let g = grad_l1(&critic, &batch, gamma, TdGradient::Residual).expect("grad");
        critic = update_w(&critic, &g, 1e-2).expect("step");
    }
    let ValueFn::Quadratic(q) = &critic else { unreachable!() };
    let err = q.to_matrix().sub(&p_true).frobenius_norm() / p_true.frobenius_norm();
    let e = t.elapsed();
    outcome(
        err < 5e-2 && within(e, 60.0),
        format!("{} transitions, rel Frobenius error {err:.2e} (< 5e-2), {:.2?} (< 60 s)", data.len(), e),
    )
}

/// Final-20 window of a cart-pole run: survivors and mean terminal offset.
fn cartpole_window(cfg: &RunConfig, out: &RunOutput) -> (usize, usize, f64, usize) {
    let EnvConfig::CartPole(p) = &cfg.env else { panic!("cart-pole preset") };
    let w = tail(&out.log.episodes, 20);
    let horizon = cfg.trainer.adapt.task_horizon.unwrap_or(p.task_horizon);
    let survived = w
        .iter()
        .filter(|e| e.steps == horizon && e.sum_l == -(horizon as f64))
        .count();
    let offset = mean(w.iter().map(|e| (e.final_state[0] - p.target_position).abs()));
    (survived, w.len(), offset, out.log.episodes.len())
}

fn cartpole_oc() -> Outcome {
    let t = Instant::now();
    let (cfg, out) = preset_run("cartpole-oc");
    let e = t.elapsed();
    let (ok, n, offset, eps) = cartpole_window(&cfg, &out);
    outcome(
        ok == 20 && offset < 0.1 && eps <= 500 && within(e, 300.0),
        format!("{eps} episodes; final 20: {ok}/{n} survive 500 steps, mean |p-p*| {offset:.3} m (< 0.1), {:.1?} (< 5 min)", e),
    )
}

fn cartpole_rl() -> Outcome {
    let t = Instant::now();
    let (cfg, out) = preset_run("cartpole-rl");
    let e = t.elapsed();
    let (ok, n, offset, eps) = cartpole_window(&cfg, &out);
    let pre = out.pretrain.as_ref().map_or(0, |l| l.episodes.len());
    outcome(
        ok == 20 && offset < 0.15 && eps <= 800 && out.model.is_some(),
        format!(
            "learned model, {pre} pretrain + {eps} adaptation episodes; final 20: {ok}/{n} survive, mean |p-p*| {offset:.3} m (< 0.15), {:.1?}",
            e
        ),
    )
}

fn first_last_ratio(eps: &[EpisodeRecord]) -> (f64, f64) {
    let first = mean(eps.iter().take(20).map(|e| e.disc_sum_c));
    let last = mean(tail(eps, 20).iter().map(|e| e.disc_sum_c));
    (first, last)
}

fn lander_switch() -> Outcome {
    let t = Instant::now();
    let (_, out) = preset_run("lander-switch");
    let e = t.elapsed();
    let (first, last) = first_last_ratio(&out.log.episodes);
    let eps = out.log.episodes.len();
    outcome(
        last <= 0.1 * first && eps <= 800,
        format!("{eps} episodes; discounted c first 20 {first:.3}, final 20 {last:.4}, ratio {:.4} (<= 0.1), {:.1?}", last / first, e),
    )
}

/// Mean over fixed noise-free rollouts of the RMS and terminal end-effector
/// goal distances.
fn arm_goal_distance(arm: &PlanarArm2Link, policy: &Policy) -> (f64, f64) {
    let horizon = arm.spec().task_horizon;
    let (mut rms, mut terminal) = (0.0, 0.0);
    let starts = 20;
    for k in 0..starts {
        let mut x = arm.reset(10_000 + k);
        let mut sq = 0.0;
        for _ in 0..horizon {
            sq += arm.goal_distance(&x).powi(2);
            let u = policy.act(&x).expect("act");
            x = arm.step(&x, &u).expect("step").next_state;
        }
        rms += (sq / horizon as f64).sqrt();
        terminal += arm.goal_distance(&x);
    }
    (rms / starts as f64, terminal / starts as f64)
}

fn arm_obstacle() -> Outcome {
    let t = Instant::now();
    let (cfg, out) = preset_run("arm-obstacle");
    let e = t.elapsed();
    let EnvConfig::PlanarArm(p) = &cfg.env else { panic!("arm preset") };
    let arm = PlanarArm2Link::new(p.clone()).expect("arm");
    let (first, last) = first_last_ratio(&out.log.episodes);
    let (rms0, term0) = arm_goal_distance(&arm, &out.start_policy);
    let (rms1, term1) = arm_goal_distance(&arm, &out.policy);
    let eps = out.log.episodes.len();
    outcome(
        last <= 0.1 * first && rms1 < 1.5 * rms0 && eps <= 400,
        format!(
            "{eps} episodes; penalty first 20 {first:.4}, final 20 {last:.4}, ratio {:.4} (<= 0.1); \
             RMS goal distance {rms1:.3} vs {rms0:.3} before, ratio {:.2} (< 1.5); terminal {term1:.1e} vs {term0:.1e}; {:.1?}",
            last / first,
            rms1 / rms0,
            e
        ),
    )
}

fn rate_exponent() -> Outcome {
    let (_, out) = preset_run("lq-rate");
    let grid = [100, 300, 1000, 3000, 10_000];
    let g = out.log.grad_norm_sq();
    let lq = rate_diagnostic(&g, &grid);
    let planted: Vec<f64> = (1..=10_000).map(|i| 1.0 / i as f64).collect();
    let synth = rate_diagnostic(&planted, &grid).expect("planted log");
    match lq {
        Ok(d) => outcome(
            d.slope <= -0.5 && (synth.slope + 1.0).abs() < 1e-6,
            format!(
                "LQ benchmark slope {:.3} (<= -0.5) over {} updates; planted 1/i slope {:.9} (-1 +- 1e-6)",
                d.slope,
                g.len(),
                synth.slope
            ),
        ),
        Err(e) => outcome(false, format!("LQ benchmark: {e}")),
    }
}

fn apg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_apg")).args(args).output().expect("spawn apg")
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).expect("csv").lines().next().unwrap_or("").to_string()
}

fn determinism_and_schema() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut cfg: serde_json::Value =
        serde_json::from_str(apg_cli::presets::get("cartpole-oc").expect("preset")).expect("json");
    cfg["trainer"]["adapt"]["episodes"] = 15.into();
    let cfg_path = dir.path().join("short.json");
    std::fs::write(&cfg_path, cfg.to_string()).expect("write config");
    let cfg_arg = cfg_path.to_str().expect("utf-8 path");

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let ra = apg(&["run", cfg_arg, "--out", a.to_str().unwrap()]);
    let rb = apg(&["run", cfg_arg, "--out", b.to_str().unwrap()]);
    let identical = ra.status.success()
        && rb.status.success()
        && ["iterations.csv", "episodes.csv"]
            .iter()
            .all(|f| std::fs::read(a.join(f)).ok().is_some_and(|x| Some(x) == std::fs::read(b.join(f)).ok()));
    let schema = header(&a.join("iterations.csv")) == ITERATION_COLUMNS.join(",")
        && header(&a.join("episodes.csv")) == EPISODE_COLUMNS.join(",");

    let vdir = dir.path().join("fresh/verify");
    let verify = apg(&["verify", "--out", vdir.to_str().unwrap()]);
    let verify_ok = verify.status.code() == Some(0) && vdir.join("verify.json").exists();

    cfg["trainer"]["adapt"]["alpha_w"]["initial"] = 1e-3.into();
    cfg["trainer"]["adapt"]["alpha_theta"]["initial"] = 1e-3.into();
    let bad_path = dir.path().join("bad.json");
    std::fs::write(&bad_path, cfg.to_string()).expect("write config");
    let bad = apg(&["run", bad_path.to_str().unwrap(), "--out", dir.path().join("c").to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&bad.stderr);
    let rejected = bad.status.code() == Some(2)
        && stderr.contains("alpha_w > alpha_theta")
        && !dir.path().join("c").exists();

    outcome(
        identical && schema && verify_ok && rejected,
        format!(
            "byte-identical CSVs {identical}, fixed headers {schema}, verify exit {:?}, alpha_w <= alpha_theta exit {:?}",
            verify.status.code(),
            bad.status.code()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("critic gradient fidelity", critic_gradient),
        ("actor gradient fidelity", actor_gradient),
        ("Riccati oracle", riccati),
        ("TD fixed point", td_fixed_point),
        ("cart-pole additional-cost adaptation", cartpole_oc),
        ("cart-pole adaptation on learned dynamics", cartpole_rl),
        ("lander task switch", lander_switch),
        ("arm obstacle adaptation", arm_obstacle),
        ("convergence-rate exponent", rate_exponent),
        ("determinism and schema", determinism_and_schema),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.passed {
            failed += 1;
        }
        let tag = if result.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {name}: {}", i + 1, result.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
