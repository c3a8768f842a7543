//! Deterministic policy `u = μ(x, θ)` and the one-step policy objective
//!
//! ```text
//! L2(θ) = 1/N Σ c(x_k, u_k) + γ V(x_{k+1}, w)
//! ```
//!
//! whose gradient pulls `∂c/∂u + γ J_uᵀ ∇V(x_{k+1})` back through `∂μ/∂θ`.
//! The next state does not depend on θ except through the control.

use std::borrow::Borrow;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::ValueFn;
use crate::dynamics::DynamicsSource;
use crate::env::{CostKind, Env, Transition};
use crate::num::{axpy, Mat, Mlp, NumError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActorError {
    #[error("policy batch is empty")]
    EmptyBatch,
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("policy {what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ActorError> {
    if expected != got {
        return Err(ActorError::Dimension { what, expected, got });
    }
    Ok(())
}

/// `u = −K(x − x_ref) + u_ref + b`. θ is `K` row-major, followed by `b`
/// when the offset is enabled. The reference pair is fixed and defaults to
/// zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFeedback {
    k: Mat,
    offset: Option<Vec<f64>>,
    reference: Option<(Vec<f64>, Vec<f64>)>,
}

impl LinearFeedback {
    pub fn new(k: Mat) -> Self {
        LinearFeedback { k, offset: None, reference: None }
    }

    pub fn with_offset(k: Mat, offset: Vec<f64>) -> Result<Self, ActorError> {
        check_len("offset", k.rows(), offset.len())?;
        Ok(LinearFeedback { k, offset: Some(offset), reference: None })
    }

    /// Like [`LinearFeedback::around`], but the equilibrium is frozen
    /// rather than learned: only `K` is a parameter.
    pub fn anchored(k: Mat, x_ref: &[f64], u_ref: &[f64]) -> Result<Self, ActorError> {
        check_len("reference state", k.cols(), x_ref.len())?;
        check_len("reference control", k.rows(), u_ref.len())?;
        Ok(LinearFeedback { k, offset: None, reference: Some((x_ref.to_vec(), u_ref.to_vec())) })
    }

    /// Gain regulating to `x_eq` with feed-forward `u_eq`:
    /// `u = u_eq − K(x − x_eq)`.
    pub fn around(k: Mat, x_eq: &[f64], u_eq: &[f64]) -> Result<Self, ActorError> {
        check_len("equilibrium state", k.cols(), x_eq.len())?;
        check_len("equilibrium control", k.rows(), u_eq.len())?;
        let kx = k.mul_vec(x_eq);
        let b = u_eq.iter().zip(kx).map(|(u, v)| u + v).collect();
        Ok(LinearFeedback { k, offset: Some(b), reference: None })
    }

    pub(crate) fn from_parts(k: Mat, offset: Option<Vec<f64>>, reference: Option<(Vec<f64>, Vec<f64>)>) -> Result<Self, ActorError> {
        if let Some(b) = &offset {
            check_len("offset", k.rows(), b.len())?;
        }
        if let Some((xr, ur)) = &reference {
            check_len("reference state", k.cols(), xr.len())?;
            check_len("reference control", k.rows(), ur.len())?;
        }
        Ok(LinearFeedback { k, offset, reference })
    }

    pub fn gain(&self) -> &Mat {
        &self.k
    }

    pub fn offset(&self) -> Option<&[f64]> {
        self.offset.as_deref()
    }

    pub fn reference(&self) -> Option<(&[f64], &[f64])> {
        self.reference.as_ref().map(|(x, u)| (x.as_slice(), u.as_slice()))
    }

    fn deviation(&self, x: &[f64]) -> Vec<f64> {
        match &self.reference {
            Some((xr, _)) => x.iter().zip(xr).map(|(a, b)| a - b).collect(),
            None => x.to_vec(),
        }
    }
}

/// Network policy squashed into the control box:
/// `u = mid + half ⊙ tanh(net(x))`.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpPolicy {
    net: Mlp,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl MlpPolicy {
    pub fn new(net: Mlp, bounds: &[(f64, f64)]) -> Result<Self, ActorError> {
        check_len("bounds", net.output_dim(), bounds.len())?;
        if bounds.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(ActorError::Invalid("network policy needs finite bounds with lo < hi".into()));
        }
        Ok(MlpPolicy {
            net,
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
        })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lo, &self.hi)
    }

    fn half(&self, i: usize) -> f64 {
        0.5 * (self.hi[i] - self.lo[i])
    }

    fn mid(&self, i: usize) -> f64 {
        0.5 * (self.hi[i] + self.lo[i])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    Linear(LinearFeedback),
    Mlp(MlpPolicy),
}

impl Policy {
    pub fn state_dim(&self) -> usize {
        match self {
            Policy::Linear(p) => p.k.cols(),
            Policy::Mlp(p) => p.net.input_dim(),
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            Policy::Linear(p) => p.k.rows(),
            Policy::Mlp(p) => p.net.output_dim(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            Policy::Linear(p) => p.k.rows() * p.k.cols() + p.offset.as_ref().map_or(0, |b| b.len()),
            Policy::Mlp(p) => p.net.num_params(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            Policy::Linear(p) => {
                let mut theta = p.k.as_slice().to_vec();
                if let Some(b) = &p.offset {
                    theta.extend_from_slice(b);
                }
                theta
            }
            Policy::Mlp(p) => p.net.flatten(),
        }
    }

    pub fn with_params(&self, theta: &[f64]) -> Result<Policy, ActorError> {
        check_len("parameters", self.num_params(), theta.len())?;
        Ok(match self {
            Policy::Linear(p) => {
                let nk = p.k.rows() * p.k.cols();
                let k = Mat::from_vec(p.k.rows(), p.k.cols(), theta[..nk].to_vec())?;
                let offset = p.offset.as_ref().map(|_| theta[nk..].to_vec());
                Policy::Linear(LinearFeedback { k, offset, reference: p.reference.clone() })
            }
            Policy::Mlp(p) => Policy::Mlp(MlpPolicy {
                net: p.net.with_params(theta)?,
                lo: p.lo.clone(),
                hi: p.hi.clone(),
            }),
        })
    }

    /// Deterministic control at `x`.
    pub fn act(&self, x: &[f64]) -> Result<Vec<f64>, ActorError> {
        check_len("state", self.state_dim(), x.len())?;
        Ok(match self {
            Policy::Linear(p) => {
                let mut u: Vec<f64> = p.k.mul_vec(&p.deviation(x)).into_iter().map(|v| -v).collect();
                if let Some((_, ur)) = &p.reference {
                    axpy(1.0, ur, &mut u);
                }
                if let Some(b) = &p.offset {
                    axpy(1.0, b, &mut u);
                }
                u
            }
            Policy::Mlp(p) => p
                .net
                .forward(x)?
                .iter()
                .enumerate()
                .map(|(i, y)| p.mid(i) + p.half(i) * y.tanh())
                .collect(),
        })
    }

    /// `gᵀ ∂μ(x, θ)/∂θ`
    pub fn vjp_params(&self, x: &[f64], g: &[f64]) -> Result<Vec<f64>, ActorError> {
        let mut acc = vec![0.0; self.num_params()];
        self.accumulate_vjp_params(x, g, 1.0, &mut acc)?;
        Ok(acc)
    }

    /// `acc += scale · gᵀ ∂μ(x, θ)/∂θ`
    pub fn accumulate_vjp_params(&self, x: &[f64], g: &[f64], scale: f64, acc: &mut [f64]) -> Result<(), ActorError> {
        check_len("state", self.state_dim(), x.len())?;
        check_len("upstream", self.control_dim(), g.len())?;
        check_len("accumulator", self.num_params(), acc.len())?;
        match self {
            Policy::Linear(p) => {
                let n = p.k.cols();
                let dx = p.deviation(x);
                // ∂u_i/∂K_ij = −(x − x_ref)_j, ∂u_i/∂b_i = 1
                for (i, gi) in g.iter().enumerate() {
                    axpy(-scale * gi, &dx, &mut acc[i * n..(i + 1) * n]);
                }
                if p.offset.is_some() {
                    let nk = p.k.rows() * n;
                    axpy(scale, g, &mut acc[nk..]);
                }
            }
            Policy::Mlp(p) => {
                let y = p.net.forward(x)?;
                let upstream: Vec<f64> = y
                    .iter()
                    .enumerate()
                    .map(|(i, yi)| {
                        let t = yi.tanh();
                        g[i] * p.half(i) * (1.0 - t * t)
                    })
                    .collect();
                p.net.accumulate_vjp_params(x, &upstream, scale, acc)?;
            }
        }
        Ok(())
    }
}

/// `θ ← θ − α·grad`
pub fn update_theta(policy: &Policy, grad: &[f64], step: f64) -> Result<Policy, ActorError> {
    if !(step > 0.0) {
        return Err(ActorError::InvalidStep(step));
    }
    let mut theta = policy.params();
    check_len("gradient", theta.len(), grad.len())?;
    axpy(-step, grad, &mut theta);
    policy.with_params(&theta)
}

/// Zero-mean Gaussian noise on executed controls, decayed geometrically per
/// episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationNoise {
    /// Standard deviation as a fraction of each control range.
    pub std_fraction: f64,
    pub decay: f64,
}

impl Default for ExplorationNoise {
    fn default() -> Self {
        ExplorationNoise {
            std_fraction: 0.1,
            decay: 0.995,
        }
    }
}

impl ExplorationNoise {
    pub fn off() -> Self {
        ExplorationNoise {
            std_fraction: 0.0,
            decay: 1.0,
        }
    }

    pub fn std_at(&self, range: &[f64], episode: usize) -> Vec<f64> {
        let f = self.std_fraction * self.decay.powi(episode as i32);
        range.iter().map(|r| f * r).collect()
    }

    /// Adds noise to `u` in place.
    pub fn perturb<R: Rng + ?Sized>(&self, u: &mut [f64], range: &[f64], episode: usize, rng: &mut R) {
        for (ui, sd) in u.iter_mut().zip(self.std_at(range, episode)) {
            if sd > 0.0 {
                *ui += Normal::new(0.0, sd).expect("finite noise std").sample(rng);
            }
        }
    }
}

/// Differentiable stage cost `c(x, u)`.
pub trait StageCost: Send + Sync {
    fn cost(&self, x: &[f64], u: &[f64]) -> f64;
    fn grad_u(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
}

/// One of an environment's stage costs.
pub struct EnvCost<'a> {
    pub env: &'a dyn Env,
    pub kind: CostKind,
}

impl StageCost for EnvCost<'_> {
    fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        self.env.cost(self.kind, x, u)
    }

    fn grad_u(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.env.cost_grad_u(self.kind, x, u)
    }
}

/// Where the gradient evaluates `∂c/∂u`, `J_u` and `x_{k+1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// At the stored, executed `(x_k, u_k, x_{k+1})`.
    #[default]
    Stored,
    /// At `u_k = μ(x_k, θ)` and `x_{k+1} = f(x_k, u_k)`: the exact gradient
    /// of [`surrogate_l2`].
    Recompute,
}

fn bootstrap(vf: &ValueFn, t: &Transition, x_next: &[f64]) -> f64 {
    if t.terminal {
        0.0
    } else {
        vf.value(x_next)
    }
}

/// Batch average of `c_k + γV(x_{k+1})` over the stored tuples.
pub fn loss_l2<T: Borrow<Transition>>(batch: &[T], vf: &ValueFn, gamma: f64) -> Result<f64, ActorError> {
    if batch.is_empty() {
        return Err(ActorError::EmptyBatch);
    }
    let sum: f64 = batch
        .iter()
        .map(|t| {
            let t = t.borrow();
            t.c + gamma * bootstrap(vf, t, &t.x_next)
        })
        .sum();
    Ok(sum / batch.len() as f64)
}

/// Batch average of `c(x_k, μ(x_k, θ)) + γV(f(x_k, μ(x_k, θ)))`.
pub fn surrogate_l2<T: Borrow<Transition>>(
    batch: &[T],
    policy: &Policy,
    vf: &ValueFn,
    dynamics: &dyn DynamicsSource,
    cost: &dyn StageCost,
    gamma: f64,
) -> Result<f64, ActorError> {
    if batch.is_empty() {
        return Err(ActorError::EmptyBatch);
    }
    let mut sum = 0.0;
    for t in batch {
        let t = t.borrow();
        let u = policy.act(&t.x)?;
        let x_next = dynamics.predict(&t.x, &u);
        sum += cost.cost(&t.x, &u) + gamma * bootstrap(vf, t, &x_next);
    }
    Ok(sum / batch.len() as f64)
}

pub fn grad_l2<T: Borrow<Transition>>(
    batch: &[T],
    policy: &Policy,
    vf: &ValueFn,
    dynamics: &dyn DynamicsSource,
    cost: &dyn StageCost,
    gamma: f64,
    mode: ActionMode,
) -> Result<Vec<f64>, ActorError> {
    if batch.is_empty() {
        return Err(ActorError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; policy.num_params()];
    for t in batch {
        let t = t.borrow();
        check_len("transition control", policy.control_dim(), t.u.len())?;
        let (u, x_next) = match mode {
            ActionMode::Stored => (t.u.clone(), t.x_next.clone()),
            ActionMode::Recompute => {
                let u = policy.act(&t.x)?;
                let x_next = dynamics.predict(&t.x, &u);
                (u, x_next)
            }
        };
        let mut g_u = cost.grad_u(&t.x, &u);
        if gamma != 0.0 && !t.terminal {
            let dv = vf.grad_x(&x_next);
            let ju = dynamics.jac_u(&t.x, &u);
            axpy(gamma, &ju.tr_mul_vec(&dv), &mut g_u);
        }
        policy.accumulate_vjp_params(&t.x, &g_u, scale, &mut grad)?;
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::QuadraticValue;
    use crate::dynamics::AnalyticDynamics;
    use crate::env::{LinearQuadratic, LinearQuadraticParams};
    use crate::num::finite_diff_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lq() -> LinearQuadratic {
        LinearQuadratic::new(LinearQuadraticParams::default()).unwrap()
    }

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, m: usize, len: usize) -> Vec<Transition> {
        (0..len)
            .map(|_| {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let u: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                let x_next: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                Transition::new(x, u, rng.random_range(0.0..1.0), x_next)
            })
            .collect()
    }

    fn random_quadratic(rng: &mut ChaCha8Rng, n: usize) -> ValueFn {
        let vf = ValueFn::quadratic(vec![1.0; n]);
        let w: Vec<f64> = (0..vf.num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        vf.with_params(&w).unwrap()
    }

    #[test]
    fn linear_feedback_actions() {
        let p = Policy::Linear(LinearFeedback::new(Mat::identity(2)));
        assert_eq!(p.act(&[1.0, -2.0]).unwrap(), vec![-1.0, 2.0]);
        let zero = p.with_params(&[0.0; 4]).unwrap();
        assert_eq!(zero.act(&[3.0, 4.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(p.act(&[1.0]), Err(ActorError::Dimension { .. })));
        let k = Mat::from_rows(&[&[1.0, 2.0]]);
        let around = Policy::Linear(LinearFeedback::around(k, &[1.0, 0.5], &[3.0]).unwrap());
        assert_eq!(around.act(&[1.0, 0.5]).unwrap(), vec![3.0]);
        assert_eq!(around.num_params(), 3);
        let anchored = Policy::Linear(LinearFeedback::anchored(Mat::from_rows(&[&[1.0, 2.0]]), &[1.0, 0.5], &[3.0]).unwrap());
        assert_eq!(anchored.act(&[1.0, 0.5]).unwrap(), vec![3.0]);
        assert_eq!(anchored.num_params(), 2);
        let retuned = anchored.with_params(&[-4.0, 7.0]).unwrap();
        assert_eq!(retuned.act(&[1.0, 0.5]).unwrap(), vec![3.0]);
    }

    #[test]
    fn mlp_policy_stays_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::random(&[3, 16, 2], &mut rng).unwrap();
        let big = net.with_params(&net.flatten().iter().map(|w| 20.0 * w).collect::<Vec<_>>()).unwrap();
        let bounds = [(-2.0, 2.0), (0.0, 3.0)];
        let p = Policy::Mlp(MlpPolicy::new(big, &bounds).unwrap());
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let u = p.act(&x).unwrap();
            for (ui, (lo, hi)) in u.iter().zip(&bounds) {
                assert!(*ui >= *lo && *ui <= *hi);
            }
        }
        let zero = p.with_params(&vec![0.0; p.num_params()]).unwrap();
        assert_eq!(zero.act(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 1.5]);
    }

    #[test]
    fn policy_vjp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::random(&[4, 8, 2], &mut rng).unwrap();
        let policies = [
            Policy::Mlp(MlpPolicy::new(net, &[(-1.0, 1.0), (-3.0, 5.0)]).unwrap()),
            Policy::Linear(LinearFeedback::with_offset(Mat::from_rows(&[&[1.0, 0.0, 2.0, -1.0], &[0.5, 0.1, 0.2, 0.3]]), vec![0.1, -0.2]).unwrap()),
            Policy::Linear(LinearFeedback::anchored(Mat::from_rows(&[&[1.0, 0.0, 2.0, -1.0], &[0.5, 0.1, 0.2, 0.3]]), &[1.0, 2.0, -0.5, 0.0], &[0.4, 0.9]).unwrap()),
        ];
        for p in &policies {
            let x = [0.3, -0.2, 0.8, 0.1];
            let g = [0.7, -1.3];
            let analytic = p.vjp_params(&x, &g).unwrap();
            let f = |th: &[f64]| {
                let u = p.with_params(th).unwrap().act(&x).unwrap();
                g[0] * u[0] + g[1] * u[1]
            };
            let rep = finite_diff_check(f, &p.params(), &analytic, 1e-5).unwrap();
            assert!(rep.max_rel_error < 1e-7, "{rep:?}");
        }
    }

    #[test]
    fn update_rules() {
        let p = Policy::Linear(LinearFeedback::new(Mat::zeros(1, 2)));
        let stepped = update_theta(&p, &[1.0, -2.0], 0.1).unwrap();
        assert_eq!(stepped.params(), vec![-0.1, 0.2]);
        assert_eq!(update_theta(&stepped, &[0.0, 0.0], 0.5).unwrap(), stepped);
        assert_eq!(update_theta(&p, &[1.0, 1.0], -1.0), Err(ActorError::InvalidStep(-1.0)));
    }

    #[test]
    fn loss_trivial_cases() {
        let vf = ValueFn::quadratic(vec![1.0; 2]);
        let batch = vec![Transition::new(vec![1.0, 1.0], vec![0.0], 0.0, vec![2.0, 2.0]); 3];
        assert_eq!(loss_l2(&batch, &vf, 0.9).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch = random_batch(&mut rng, 2, 1, 10);
        let vf = random_quadratic(&mut rng, 2);
        let mean_c = batch.iter().map(|t| t.c).sum::<f64>() / 10.0;
        assert!((loss_l2(&batch, &vf, 0.0).unwrap() - mean_c).abs() < 1e-15);
        let naive = batch.iter().map(|t| t.c + 0.9 * vf.value(&t.x_next)).sum::<f64>() / 10.0;
        assert!((loss_l2(&batch, &vf, 0.9).unwrap() - naive).abs() < 1e-12);
        let empty: [Transition; 0] = [];
        assert_eq!(loss_l2(&empty, &vf, 0.9), Err(ActorError::EmptyBatch));
    }

    #[test]
    fn zero_discount_is_cost_chain_rule() {
        let env = lq();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let batch = random_batch(&mut rng, 2, 1, 12);
        let k = Mat::from_rows(&[&[0.8, 1.1]]);
        let policy = Policy::Linear(LinearFeedback::new(k));
        let vf = random_quadratic(&mut rng, 2);
        let cost = EnvCost { env: &env, kind: CostKind::Additional };
        let g = grad_l2(&batch, &policy, &vf, &AnalyticDynamics(&env), &cost, 0.0, ActionMode::Stored).unwrap();
        // ∂c/∂u = 2 R_c u and ∂u/∂K_j = −x_j
        let r_c = env.r_c().get(0, 0);
        let mut expected = [0.0; 2];
        for t in &batch {
            for j in 0..2 {
                expected[j] += 2.0 * r_c * t.u[0] * -t.x[j] / 12.0;
            }
        }
        for j in 0..2 {
            assert!((g[j] - expected[j]).abs() < 1e-12);
        }
        // a constant critic drops the dynamics term for any γ
        let constant = ValueFn::quadratic(vec![1.0; 2]).with_params(&[4.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let g2 = grad_l2(&batch, &policy, &constant, &AnalyticDynamics(&env), &cost, 0.9, ActionMode::Stored).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn recompute_gradient_matches_surrogate_finite_differences() {
        let env = lq();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dynamics = AnalyticDynamics(&env);
        let cost = EnvCost { env: &env, kind: CostKind::Additional };
        for _ in 0..50 {
            let batch = random_batch(&mut rng, 2, 1, 16);
            let vf = ValueFn::Quadratic(QuadraticValue::from_matrix(
                &Mat::from_rows(&[&[3.0, 0.4], &[0.4, 1.0]]),
                vec![1.0; 2],
            ));
            let policy = Policy::Linear(
                LinearFeedback::with_offset(
                    Mat::from_rows(&[&[rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)]]),
                    vec![rng.random_range(-0.5..0.5)],
                )
                .unwrap(),
            );
            let g = grad_l2(&batch, &policy, &vf, &dynamics, &cost, 0.95, ActionMode::Recompute).unwrap();
            let f = |th: &[f64]| {
                surrogate_l2(&batch, &policy.with_params(th).unwrap(), &vf, &dynamics, &cost, 0.95).unwrap()
            };
            let rep = finite_diff_check(f, &policy.params(), &g, 1e-5).unwrap();
            assert!(rep.max_rel_error < 1e-5, "{rep:?}");
        }
    }

    #[test]
    fn noise_decays_per_episode() {
        let noise = ExplorationNoise { std_fraction: 0.1, decay: 0.5 };
        assert_eq!(noise.std_at(&[20.0], 0), vec![2.0]);
        assert_eq!(noise.std_at(&[20.0], 2), vec![0.5]);
        let mut u = vec![1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        ExplorationNoise::off().perturb(&mut u, &[1.0, 1.0], 0, &mut rng);
        assert_eq!(u, vec![1.0, 2.0]);
    }
}
