use apg_core::actor::{grad_l2, update_theta, ActionMode, EnvCost, ExplorationNoise, LinearFeedback, Policy};
use apg_core::critic::{grad_l1, update_w, QuadraticValue, TdGradient, ValueFn};
use apg_core::dynamics::AnalyticDynamics;
use apg_core::env::{CostKind, Env, LinearQuadratic, LinearQuadraticParams};
use apg_core::lqr::solve_dare;
use apg_core::num::{norm_sq, Mat};
use apg_core::trainer::{
    collect_transitions, lqr_policy, pretrain_rl, train, ApgConfig, NoObserver, Schedule, TrainObserver, Trainer,
    UpdateEvent,
};
use proptest::prelude::*;

fn lq_env() -> LinearQuadratic {
    LinearQuadratic::new(LinearQuadraticParams {
        reset_noise: vec![1.0, 1.0],
        task_horizon: 30,
        ..LinearQuadraticParams::default()
    })
    .unwrap()
}

fn start_policy(env: &LinearQuadratic) -> Policy {
    lqr_policy(env.a(), env.b(), env.q(), env.r(), 1.0, &[0.0, 0.0], &[0.0]).unwrap()
}

fn small_cfg(seed: u64) -> ApgConfig {
    ApgConfig {
        episodes: 6,
        batch_size: 16,
        alpha_w: Schedule::constant(3e-2),
        alpha_theta: Schedule::constant(3e-3),
        buffer_capacity: 500,
        noise: ExplorationNoise { std_fraction: 0.01, decay: 0.99 },
        grad_clip: Some(5.0),
        refit_every: 0,
        seed,
        ..ApgConfig::default()
    }
}

fn clipped(g: &[f64], c: f64) -> Vec<f64> {
    let n = norm_sq(g).sqrt();
    if n > c {
        let s = c / n;
        g.iter().map(|v| v * s).collect()
    } else {
        g.to_vec()
    }
}

struct OrderCheck<'a> {
    env: &'a LinearQuadratic,
    cfg: ApgConfig,
    updates: usize,
}

impl TrainObserver for OrderCheck<'_> {
    fn on_update(&mut self, ev: &UpdateEvent<'_>) {
        let gamma = self.cfg.discount(self.env.spec());
        let clip = self.cfg.grad_clip.unwrap();
        let g_w = grad_l1(ev.critic_before, ev.batch, gamma, self.cfg.td_gradient).unwrap();
        let expect_critic = update_w(ev.critic_before, &clipped(&g_w, clip), self.cfg.alpha_w.initial).unwrap();
        assert_eq!(ev.critic_after, &expect_critic);

        let cost = EnvCost { env: self.env, kind: self.cfg.cost };
        let dynamics = AnalyticDynamics(self.env);
        let after =
            grad_l2(ev.batch, ev.policy_before, ev.critic_after, &dynamics, &cost, gamma, self.cfg.action_mode).unwrap();
        assert_eq!(ev.grad_theta, &after[..], "actor must see the updated critic");
        let before =
            grad_l2(ev.batch, ev.policy_before, ev.critic_before, &dynamics, &cost, gamma, self.cfg.action_mode).unwrap();
        if self.updates > 0 {
            assert_ne!(ev.grad_theta, &before[..]);
        }
        let expect_policy =
            update_theta(ev.policy_before, &clipped(ev.grad_theta, clip), self.cfg.alpha_theta.initial).unwrap();
        assert_eq!(ev.policy_after, &expect_policy);
        self.updates += 1;
    }
}

#[test]
fn critic_is_updated_before_the_actor() {
    let env = lq_env();
    let cfg = small_cfg(1);
    let mut check = OrderCheck { env: &env, cfg: cfg.clone(), updates: 0 };
    let (_, _, _, log) = train(&env, start_policy(&env), ValueFn::quadratic(vec![1.0, 1.0]), None, &cfg, &mut check).unwrap();
    assert_eq!(check.updates, log.iterations.len());
    assert!(check.updates > 100);
}

#[test]
fn zero_actor_step_freezes_the_policy() {
    let env = lq_env();
    let cfg = ApgConfig { alpha_theta: Schedule::constant(0.0), ..small_cfg(2) };
    let policy = start_policy(&env);
    let critic = ValueFn::quadratic(vec![1.0, 1.0]);
    let (after, critic_after, _, log) = train(&env, policy.clone(), critic.clone(), None, &cfg, &mut NoObserver).unwrap();
    assert_eq!(after, policy);
    assert_ne!(critic_after, critic);
    assert!(log.iterations.iter().all(|r| r.alpha_theta == 0.0 && r.grad_norm_sq > 0.0));
}

#[test]
fn same_seed_same_run() {
    let env = lq_env();
    let run = |seed| {
        train(&env, start_policy(&env), ValueFn::quadratic(vec![1.0, 1.0]), None, &small_cfg(seed), &mut NoObserver)
            .unwrap()
    };
    let (p1, c1, _, l1) = run(5);
    let (p2, c2, _, l2) = run(5);
    let (p3, _, _, l3) = run(6);
    assert_eq!((p1.clone(), c1, l1.clone()), (p2, c2, l2));
    assert_ne!(l1, l3);
    assert_ne!(p1, p3);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let env = lq_env();
    let cfg = small_cfg(9);
    let dir = tempfile::tempdir().unwrap();
    let critic = ValueFn::quadratic(vec![1.0, 1.0]);

    let mut whole = Trainer::new(&env, start_policy(&env), critic.clone(), None, cfg.clone()).unwrap();
    whole.run(&mut NoObserver).unwrap();

    let mut first = Trainer::new(&env, start_policy(&env), critic, None, cfg.clone()).unwrap();
    for _ in 0..3 {
        first.run_episode(&mut NoObserver).unwrap();
    }
    first.save_checkpoint(dir.path()).unwrap();
    drop(first);
    let mut resumed = Trainer::resume(&env, cfg, dir.path()).unwrap();
    assert_eq!(resumed.episodes_done(), 3);
    resumed.run(&mut NoObserver).unwrap();

    assert_eq!(resumed.log(), whole.log());
    assert_eq!(resumed.policy(), whole.policy());
    assert_eq!(resumed.critic(), whole.critic());
}

/// Gain minimizing the discounted additional cost of the LQ benchmark.
fn c_optimal(env: &LinearQuadratic, gamma: f64) -> (Mat, Mat) {
    let sol = solve_dare(env.a(), env.b(), env.q_c(), env.r_c(), gamma, 1e-14, 200_000).unwrap();
    (sol.p, sol.k)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn optimal_pair_has_vanishing_policy_gradient(seed in 0u64..1_000, mode in prop_oneof![Just(ActionMode::Stored), Just(ActionMode::Recompute)]) {
        let env = lq_env();
        let gamma = 0.95;
        let (p, k) = c_optimal(&env, gamma);
        let policy = Policy::Linear(LinearFeedback::with_offset(k, vec![0.0]).unwrap());
        let critic = ValueFn::Quadratic(QuadraticValue::from_matrix(&p, vec![1.0, 1.0]));
        let batch = collect_transitions(&env, Some(&policy), CostKind::Additional, &ExplorationNoise::off(), 4, 16, seed).unwrap();
        let cost = EnvCost { env: &env, kind: CostKind::Additional };
        let g = grad_l2(&batch, &policy, &critic, &AnalyticDynamics(&env), &cost, gamma, mode).unwrap();
        prop_assert!(norm_sq(&g).sqrt() < 1e-2, "grad {:?}", g);
    }
}

#[test]
fn pretraining_recovers_the_lqr_gain() {
    let env = lq_env();
    let gamma = 0.95;
    let target = solve_dare(env.a(), env.b(), env.q(), env.r(), gamma, 1e-14, 200_000).unwrap().k;
    let start = LinearFeedback::with_offset(target.scale(1.3), vec![0.0]).unwrap();
    let cfg = ApgConfig {
        episodes: 600,
        task_horizon: Some(50),
        gamma: Some(gamma),
        alpha_w: Schedule::constant(1e-1),
        alpha_theta: Schedule::constant(1e-2),
        buffer_capacity: 500,
        noise: ExplorationNoise::off(),
        td_gradient: TdGradient::SemiGradient,
        action_mode: ActionMode::Recompute,
        grad_clip: None,
        refit_every: 0,
        seed: 3,
        ..ApgConfig::default()
    };
    let (policy, _, _, _) =
        pretrain_rl(&env, Policy::Linear(start), ValueFn::quadratic(vec![1.0, 1.0]), None, &cfg, &mut NoObserver).unwrap();
    let Policy::Linear(lf) = policy else { unreachable!() };
    let rel = lf.gain().sub(&target).frobenius_norm() / target.frobenius_norm();
    assert!(rel < 0.1, "gain {:?} vs {:?} ({rel:.3})", lf.gain().as_slice(), target.as_slice());
}
