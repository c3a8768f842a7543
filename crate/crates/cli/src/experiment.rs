//! Turning a [`RunConfig`] into trained artifacts: fit the model, build the
//! starting policy, optionally pretrain, then adapt.

use std::path::Path;

use apg_core::actor::{ExplorationNoise, LinearFeedback, MlpPolicy, Policy};
use apg_core::critic::ValueFn;
use apg_core::dynamics::{linearize, AnalyticDynamics, DynModel, DynamicsSource};
use apg_core::env::{CostKind, Env, EnvConfig, LanderLite, PlanarArm2Link};
use apg_core::lqr::solve_dare;
use apg_core::num::{Mat, Mlp};
use apg_core::trainer::{collect_transitions, pretrain_rl, DynamicsKind, NoObserver, RunLog, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{CriticConfig, LqrPolicy, NamedPoint, Point, PolicyConfig, RunConfig};
use crate::error::CliError;

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub seed: u64,
    /// Policy built from the `policy` section.
    pub initial_policy: Policy,
    pub pretrain: Option<RunLog>,
    /// Policy entering adaptation.
    pub start_policy: Policy,
    pub log: RunLog,
    pub policy: Policy,
    pub critic: ValueFn,
    pub model: Option<DynModel>,
}

const MODEL_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;
const PRETRAIN_CRITIC_STREAM: u64 = 3;
const CRITIC_STREAM: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// The environment's regulation target.
pub fn goal_state(cfg: &EnvConfig) -> Result<Vec<f64>, CliError> {
    let env_err = |e: apg_core::env::EnvError| CliError::Config(format!("env: {e}"));
    Ok(match cfg {
        EnvConfig::LinearQuadratic(p) => p.x_target.clone(),
        EnvConfig::CartPole(p) => vec![p.target_position, 0.0, 0.0, 0.0],
        EnvConfig::LanderLite(p) => LanderLite::new(p.clone()).map_err(env_err)?.landing_target(),
        EnvConfig::PlanarArm(p) => {
            let q = PlanarArm2Link::new(p.clone())
                .and_then(|arm| arm.goal_joints())
                .map_err(env_err)?;
            vec![q[0], q[1], 0.0, 0.0]
        }
    })
}

/// Least-squares control holding `x` fixed, by Gauss-Newton on
/// `f(x, u) − x`.
pub fn equilibrium_control(source: &dyn DynamicsSource, x: &[f64], m: usize) -> Result<Vec<f64>, CliError> {
    let mut u = vec![0.0; m];
    let residual = |u: &[f64]| -> Vec<f64> { source.predict(x, u).iter().zip(x).map(|(a, b)| a - b).collect() };
    for _ in 0..50 {
        let r = residual(&u);
        let j = source.jac_u(x, &u);
        let jt = j.transpose();
        let normal = jt.matmul(&j).add(&Mat::identity(m).scale(1e-12));
        let step = normal
            .solve(&Mat::column(&jt.mul_vec(&r)))
            .map_err(|e| CliError::Config(format!("equilibrium control: {e}")))?;
        let mut moved = 0.0f64;
        for (ui, s) in u.iter_mut().zip(step.as_slice()) {
            *ui -= s;
            moved = moved.max(s.abs());
        }
        if moved < 1e-13 {
            break;
        }
    }
    let r = residual(&u);
    let err = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(err < 1e-6) {
        return Err(CliError::Config(format!(
            "no control holds x_eq fixed (best residual {err:.3e}); give u_eq explicitly"
        )));
    }
    Ok(u)
}

fn resolve_state(point: &Point, env_cfg: &EnvConfig, n: usize) -> Result<Vec<f64>, CliError> {
    match point {
        Point::Value(v) => Ok(v.clone()),
        Point::Named(NamedPoint::Origin) => Ok(vec![0.0; n]),
        Point::Named(NamedPoint::Goal) => goal_state(env_cfg),
        Point::Named(NamedPoint::Equilibrium) => Err(CliError::Config("x_eq cannot be \"equilibrium\"".into())),
    }
}

fn lqr_start(
    l: &LqrPolicy,
    env_cfg: &EnvConfig,
    env: &dyn Env,
    model: Option<&DynModel>,
) -> Result<Policy, CliError> {
    let spec = env.spec();
    let (n, m) = (spec.state_dim, spec.control_dim);
    let analytic = AnalyticDynamics(env);
    let source: &dyn DynamicsSource = match (l.linearization, model) {
        (DynamicsKind::Analytic, _) => &analytic,
        (DynamicsKind::Learned, Some(model)) => model,
        (DynamicsKind::Learned, None) => {
            return Err(CliError::Config("learned linearization needs dynamics.model".into()))
        }
    };
    let x_eq = resolve_state(&l.x_eq, env_cfg, n)?;
    let u_eq = match &l.u_eq {
        Point::Value(v) => v.clone(),
        Point::Named(NamedPoint::Origin) => vec![0.0; m],
        Point::Named(NamedPoint::Equilibrium) => equilibrium_control(source, &x_eq, m)?,
        Point::Named(NamedPoint::Goal) => return Err(CliError::Config("u_eq cannot be \"goal\"".into())),
    };
    let (a, b) = match l.linearization {
        DynamicsKind::Analytic => env.linearize(&x_eq, &u_eq),
        DynamicsKind::Learned => linearize(source, &x_eq, &u_eq),
    };
    let beta = l.beta.unwrap_or(spec.beta);
    let sol = solve_dare(&a, &b, &Mat::from_diag(&l.q), &Mat::from_diag(&l.r), beta, 1e-12, 200_000)
        .map_err(|e| CliError::Config(format!("policy LQR: {e}")))?;
    let lf = if l.anchored {
        LinearFeedback::anchored(sol.k, &x_eq, &u_eq)
    } else {
        LinearFeedback::around(sol.k, &x_eq, &u_eq)
    }
    .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Policy::Linear(lf))
}

/// Starting policy described by the `policy` section.
pub fn build_policy(cfg: &RunConfig, env: &dyn Env, model: Option<&DynModel>) -> Result<Policy, CliError> {
    let spec = env.spec();
    match &cfg.policy {
        PolicyConfig::Lqr(l) => lqr_start(l, &cfg.env, env, model),
        PolicyConfig::Linear { gain, offset } => {
            let rows: Vec<&[f64]> = gain.iter().map(Vec::as_slice).collect();
            let k = Mat::from_rows(&rows);
            let lf = match offset {
                Some(b) => LinearFeedback::with_offset(k, b.clone()).map_err(|e| CliError::Config(e.to_string()))?,
                None => LinearFeedback::new(k),
            };
            Ok(Policy::Linear(lf))
        }
        PolicyConfig::Mlp { hidden } => {
            let mut sizes = vec![spec.state_dim];
            sizes.extend(hidden);
            sizes.push(spec.control_dim);
            let mut rng = stream(cfg.trainer.seed, POLICY_STREAM);
            let net = Mlp::random(&sizes, &mut rng).map_err(|e| CliError::Config(format!("policy: {e}")))?;
            let mlp = MlpPolicy::new(net, &spec.control_bounds).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Policy::Mlp(mlp))
        }
    }
}

/// Fresh critic described by the `critic` section.
pub fn build_critic(cfg: &RunConfig, state_dim: usize, stream_id: u64) -> Result<ValueFn, CliError> {
    match &cfg.critic {
        CriticConfig::Quadratic { scale } => Ok(ValueFn::quadratic(scale.clone())),
        CriticConfig::Mlp { hidden } => {
            let mut rng = stream(cfg.trainer.seed, stream_id);
            ValueFn::mlp(state_dim, hidden, &mut rng).map_err(|e| CliError::Config(format!("critic: {e}")))
        }
    }
}

/// Fits the learned model when one is configured.
pub fn build_model(cfg: &RunConfig, env: &dyn Env) -> Result<Option<DynModel>, CliError> {
    let Some(mc) = &cfg.dynamics.model else {
        return Ok(None);
    };
    let spec = env.spec();
    let seed = cfg.trainer.seed;
    let data = collect_transitions(
        env,
        None,
        CostKind::Original,
        &ExplorationNoise::off(),
        mc.data_episodes,
        mc.data_horizon,
        seed,
    )?;
    let mut rng = stream(seed, MODEL_STREAM);
    let mut model =
        DynModel::new(spec.state_dim, spec.control_dim, &mc.hidden, &mut rng).map_err(|e| CliError::Config(format!("dynamics.model: {e}")))?;
    model.fit(&data, &mc.fit).map_err(|e| CliError::Failed(format!("dynamics fit: {e}")))?;
    Ok(Some(model))
}

/// Runs the whole pipeline for a seeded config (see [`RunConfig::with_seed`]),
/// writing the adaptation checkpoint into `checkpoint_dir` when given.
pub fn run(cfg: &RunConfig, checkpoint_dir: Option<&Path>) -> Result<RunOutput, CliError> {
    let env = cfg.env.build().map_err(|e| CliError::Config(format!("env: {e}")))?;
    let env = env.as_ref();
    let n = env.spec().state_dim;
    let model = build_model(cfg, env)?;
    let initial_policy = build_policy(cfg, env, model.as_ref())?;

    let (start_policy, model, pretrain) = match &cfg.trainer.pretrain {
        Some(pre) => {
            let critic = build_critic(cfg, n, PRETRAIN_CRITIC_STREAM)?;
            let (policy, _, model, log) =
                pretrain_rl(env, initial_policy.clone(), critic, model, pre, &mut NoObserver)?;
            (policy, model, Some(log))
        }
        None => (initial_policy.clone(), model, None),
    };

    let critic = build_critic(cfg, n, CRITIC_STREAM)?;
    let mut trainer = Trainer::new(env, start_policy.clone(), critic, model, cfg.trainer.adapt.clone())?;
    trainer.run(&mut NoObserver)?;
    if let Some(dir) = checkpoint_dir {
        trainer.save_checkpoint(dir)?;
    }
    let (policy, critic, model, log) = trainer.into_parts();
    Ok(RunOutput {
        seed: cfg.trainer.seed,
        initial_policy,
        pretrain,
        start_policy,
        log,
        policy,
        critic,
        model,
    })
}
