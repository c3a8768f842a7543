//! Building the pre-trained starting policy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ApgConfig;
use super::log::RunLog;
use super::train::{train, TrainError, TrainObserver};
use crate::actor::{ExplorationNoise, LinearFeedback, Policy};
use crate::critic::ValueFn;
use crate::dynamics::{DynModel, FitConfig, Optimizer};
use crate::env::{CostKind, Env, Transition};
use crate::lqr::{solve_dare, LqrError};
use crate::num::{Adam, Mat};

/// Runs the training loop with the original stage cost in place of the
/// additional one.
pub fn pretrain_rl(
    env: &dyn Env,
    policy: Policy,
    critic: ValueFn,
    model: Option<DynModel>,
    cfg: &ApgConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(Policy, ValueFn, Option<DynModel>, RunLog), TrainError> {
    let mut cfg = cfg.clone();
    cfg.cost = CostKind::Original;
    train(env, policy, critic, model, &cfg, observer)
}

/// Discounted LQR gain for the linearization at `(x_eq, u_eq)`, wrapped as
/// an affine policy regulating to that point.
pub fn lqr_policy(
    a: &Mat,
    b: &Mat,
    q: &Mat,
    r: &Mat,
    beta: f64,
    x_eq: &[f64],
    u_eq: &[f64],
) -> Result<Policy, LqrError> {
    let sol = solve_dare(a, b, q, r, beta, 1e-12, 200_000)?;
    let lf = LinearFeedback::around(sol.k, x_eq, u_eq).map_err(|e| LqrError::Shape(e.to_string()))?;
    Ok(Policy::Linear(lf))
}

/// Rollouts of `behaviour` (or uniform random controls when `None`) with
/// exploration noise, recording stage cost `cost`. Episodes stop at
/// termination.
pub fn collect_transitions(
    env: &dyn Env,
    behaviour: Option<&Policy>,
    cost: CostKind,
    noise: &ExplorationNoise,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Transition>, TrainError> {
    let spec = env.spec();
    let range = spec.control_range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for _ in 0..episodes {
        let mut x = env.reset(rng.random());
        for _ in 0..horizon {
            let mut u = match behaviour {
                Some(p) => p.act(&x)?,
                None => spec.control_bounds.iter().map(|(lo, hi)| rng.random_range(*lo..*hi)).collect(),
            };
            noise.perturb(&mut u, &range, 0, &mut rng);
            let u = env.clamp_control(&u);
            let step = env.step(&x, &u)?;
            let c = match cost {
                CostKind::Original => step.stage_cost_l,
                CostKind::Additional => step.stage_cost_c,
            };
            out.push(Transition::new(x, u, c, step.next_state.clone()));
            x = step.next_state;
            if step.done {
                break;
            }
        }
    }
    Ok(out)
}

/// Regresses `student` onto the clamped controls of `teacher` at `states`.
/// Returns the fitted policy and the per-epoch mean squared error.
pub fn behavior_clone(
    env: &dyn Env,
    student: &Policy,
    teacher: &Policy,
    states: &[Vec<f64>],
    cfg: &FitConfig,
) -> Result<(Policy, Vec<f64>), TrainError> {
    if states.is_empty() {
        return Err(TrainError::Config("behavior cloning needs at least one state".into()));
    }
    let targets: Vec<Vec<f64>> = states
        .iter()
        .map(|x| teacher.act(x).map(|u| env.clamp_control(&u)))
        .collect::<Result<_, _>>()?;
    let m = student.control_dim() as f64;
    let mut theta = student.params();
    let mut policy = student.clone();
    let mut adam = Adam::new(theta.len(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..states.len()).collect();
    let batch = cfg.batch_size.unwrap_or(states.len()).clamp(1, states.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(batch) {
            let mut grad = vec![0.0; theta.len()];
            let scale = 2.0 / (idx.len() as f64 * m);
            for &k in idx {
                let u = policy.act(&states[k])?;
                let resid: Vec<f64> = u.iter().zip(&targets[k]).map(|(a, b)| a - b).collect();
                total += resid.iter().map(|r| r * r).sum::<f64>() / m;
                policy.accumulate_vjp_params(&states[k], &resid, scale, &mut grad)?;
            }
            match cfg.optimizer {
                Optimizer::Adam => adam.step(&mut theta, &grad),
                Optimizer::Gd => crate::num::axpy(-cfg.lr, &grad, &mut theta),
            }
            policy = policy.with_params(&theta)?;
        }
        history.push(total / states.len() as f64);
    }
    Ok((policy, history))
}
