//! Deterministic simulated environments.
//!
//! Every environment exposes the one-step map `f(x, u)`, the original stage
//! cost `l`, the additional stage cost `c`, a termination test and the
//! analytic control Jacobian `∂f/∂u`. State is always passed in explicitly.

mod arm;
mod cartpole;
mod lander;
mod lq;

pub use arm::{PlanarArm2Link, PlanarArmParams};
pub use cartpole::{CartPole, CartPoleParams};
pub use lander::{LanderLite, LanderParams};
pub use lq::{LinearQuadratic, LinearQuadraticParams};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{central_difference, Mat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("numerical blow-up: non-finite {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid environment parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub control_dim: usize,
    /// seconds
    pub dt: f64,
    pub task_horizon: usize,
    pub control_bounds: Vec<(f64, f64)>,
    /// Discount of the original objective.
    pub beta: f64,
    /// Discount of the additional loss.
    pub gamma: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidParams(msg));
        if self.state_dim == 0 || self.control_dim == 0 {
            return bad("state and control dimensions must be at least 1".into());
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.control_bounds.len() != self.control_dim {
            return bad(format!(
                "{} control bounds for {} controls",
                self.control_bounds.len(),
                self.control_dim
            ));
        }
        for (i, (lo, hi)) in self.control_bounds.iter().enumerate() {
            if !(lo < hi) {
                return bad(format!("control bound {i}: lo {lo} must be below hi {hi}"));
            }
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        Ok(())
    }

    pub fn control_range(&self) -> Vec<f64> {
        self.control_bounds.iter().map(|(lo, hi)| hi - lo).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub stage_cost_l: f64,
    pub stage_cost_c: f64,
    pub done: bool,
}

/// One stored tuple `{x, u, c, x'}`.
///
/// `terminal` marks an absorbing end state whose value is taken as zero when
/// bootstrapping. Transitions recorded for the additional loss leave it
/// `false`, which reproduces the plain TD residual.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub c: f64,
    pub x_next: Vec<f64>,
    pub terminal: bool,
}

impl Transition {
    pub fn new(x: Vec<f64>, u: Vec<f64>, c: f64, x_next: Vec<f64>) -> Self {
        Transition {
            x,
            u,
            c,
            x_next,
            terminal: false,
        }
    }
}

/// Which stage cost a computation refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// `l`, the original task.
    Original,
    /// `c`, the additional loss.
    Additional,
}

pub trait Env: Send + Sync {
    fn name(&self) -> &'static str;

    fn spec(&self) -> &EnvSpec;

    fn initial_state(&self) -> Vec<f64>;

    /// Half-widths of the uniform reset perturbation. All zero disables it.
    fn reset_noise(&self) -> &[f64];

    /// Discrete-time map without control clamping.
    fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64>;

    /// `∂f/∂u`, shape `n × m`, of the unclamped map.
    fn jac_f_u(&self, x: &[f64], u: &[f64]) -> Mat;

    fn cost(&self, kind: CostKind, x: &[f64], u: &[f64]) -> f64;

    fn cost_grad_u(&self, kind: CostKind, x: &[f64], u: &[f64]) -> Vec<f64>;

    fn is_terminal(&self, _x: &[f64]) -> bool {
        false
    }

    /// `(A, B)` of the linearization at `(x_eq, u_eq)`. The default uses
    /// central differences of `dynamics` for `A` and the analytic `B`.
    fn linearize(&self, x_eq: &[f64], u_eq: &[f64]) -> (Mat, Mat) {
        let n = self.spec().state_dim;
        let mut a = Mat::zeros(n, n);
        for row in 0..n {
            let grad = central_difference(|x| self.dynamics(x, u_eq)[row], x_eq, 1e-6);
            for (col, g) in grad.into_iter().enumerate() {
                a.set(row, col, g);
            }
        }
        (a, self.jac_f_u(x_eq, u_eq))
    }

    /// Initial state, perturbed uniformly when a reset perturbation is
    /// configured. Deterministic in `seed`.
    fn reset(&self, seed: u64) -> Vec<f64> {
        let mut x = self.initial_state();
        let noise = self.reset_noise();
        if noise.iter().any(|w| *w > 0.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (xi, w) in x.iter_mut().zip(noise) {
                if *w > 0.0 {
                    *xi += rng.random_range(-*w..=*w);
                }
            }
        }
        x
    }

    fn clamp_control(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.spec().control_bounds)
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }

    fn step(&self, x: &[f64], u: &[f64]) -> Result<StepResult, EnvError> {
        let spec = self.spec();
        check_dim("state", spec.state_dim, x.len())?;
        check_dim("control", spec.control_dim, u.len())?;
        check_finite("state", x)?;
        check_finite("control", u)?;
        let u = self.clamp_control(u);
        let next_state = self.dynamics(x, &u);
        check_finite("next state", &next_state)?;
        Ok(StepResult {
            stage_cost_l: self.cost(CostKind::Original, x, &u),
            stage_cost_c: self.cost(CostKind::Additional, x, &u),
            done: self.is_terminal(&next_state),
            next_state,
        })
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), EnvError> {
    if expected != got {
        return Err(EnvError::Dimension { what, expected, got });
    }
    Ok(())
}

fn check_finite(what: &'static str, v: &[f64]) -> Result<(), EnvError> {
    match v.iter().position(|a| !a.is_finite()) {
        Some(index) => Err(EnvError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// Serializable environment selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    LinearQuadratic(LinearQuadraticParams),
    CartPole(CartPoleParams),
    LanderLite(LanderParams),
    PlanarArm(PlanarArmParams),
}

impl EnvConfig {
    pub fn build(&self) -> Result<Box<dyn Env>, EnvError> {
        Ok(match self {
            EnvConfig::LinearQuadratic(p) => Box::new(LinearQuadratic::new(p.clone())?),
            EnvConfig::CartPole(p) => Box::new(CartPole::new(p.clone())?),
            EnvConfig::LanderLite(p) => Box::new(LanderLite::new(p.clone())?),
            EnvConfig::PlanarArm(p) => Box::new(PlanarArm2Link::new(p.clone())?),
        })
    }
}

/// Shared property checks run against every environment.
#[cfg(test)]
pub(crate) mod contract {
    use super::*;
    use crate::num::finite_diff_check;

    pub fn jacobian_matches_fd(env: &dyn Env, seed: u64, state_box: &[f64], cases: usize) {
        let spec = env.spec().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for case in 0..cases {
            let x: Vec<f64> = state_box.iter().map(|w| rng.random_range(-*w..=*w)).collect();
            let x: Vec<f64> = x.iter().zip(env.initial_state()).map(|(d, x0)| x0 + d).collect();
            let u: Vec<f64> = spec
                .control_bounds
                .iter()
                .map(|(lo, hi)| {
                    let pad = 0.1 * (hi - lo);
                    rng.random_range(lo + pad..=hi - pad)
                })
                .collect();
            let jac = env.jac_f_u(&x, &u);
            assert_eq!(jac.shape(), (spec.state_dim, spec.control_dim));
            for row in 0..spec.state_dim {
                let analytic: Vec<f64> = (0..spec.control_dim).map(|c| jac.get(row, c)).collect();
                let rep = finite_diff_check(|uu| env.dynamics(&x, uu)[row], &u, &analytic, 1e-5).unwrap();
                assert!(
                    rep.max_rel_error < 1e-5,
                    "{} case {case} row {row}: {rep:?}",
                    env.name()
                );
            }
        }
    }

    pub fn deterministic(env: &dyn Env, controls: &[Vec<f64>]) {
        let run = || {
            let mut x = env.reset(17);
            let mut traj = vec![x.clone()];
            for u in controls {
                x = env.step(&x, u).unwrap().next_state;
                traj.push(x.clone());
            }
            traj
        };
        let a = run();
        let b = run();
        for (s, t) in a.iter().zip(&b) {
            assert!(s.iter().zip(t).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
