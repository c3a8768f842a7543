//! Value critic `V(x, w)` trained on the squared temporal-difference error
//!
//! ```text
//! L1(w) = 1/N Σ δ_k²,   δ_k = c_k + γ V(x_{k+1}, w) − V(x_k, w)
//! ```
//!
//! with the residual gradient `2/N Σ δ_k (γ ∂V(x_{k+1})/∂w − ∂V(x_k)/∂w)`.

use std::borrow::Borrow;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::Transition;
use crate::num::{axpy, Mat, Mlp, NumError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriticError {
    #[error("TD batch is empty")]
    EmptyBatch,
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("critic expects {expected} parameters, got {got}")]
    ParamLength { expected: usize, got: usize },
    #[error("critic expects a {expected}-dimensional state, got {got}")]
    StateDim { expected: usize, got: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Gradient used for the critic update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TdGradient {
    /// Differentiates both `V(x_{k+1})` and `V(x_k)`.
    #[default]
    Residual,
    /// Treats the bootstrap target as a constant (TD(0)).
    SemiGradient,
}

/// `V = wᵀφ(z)` with `z = x / scale` and `φ(z)` the monomials of degree ≤ 2:
/// `[1, z_1, …, z_n, z_1z_1, z_1z_2, …, z_nz_n]` (upper triangle, row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticValue {
    scale: Vec<f64>,
    w: Vec<f64>,
}

impl QuadraticValue {
    pub fn zeros(n: usize) -> Self {
        Self::with_scale(vec![1.0; n])
    }

    pub fn with_scale(scale: Vec<f64>) -> Self {
        let n = scale.len();
        QuadraticValue {
            scale,
            w: vec![0.0; Self::feature_count(n)],
        }
    }

    pub fn feature_count(n: usize) -> usize {
        1 + n + n * (n + 1) / 2
    }

    pub fn state_dim(&self) -> usize {
        self.scale.len()
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Weights encoding `V(x) = xᵀPx` exactly.
    pub fn from_matrix(p: &Mat, scale: Vec<f64>) -> Self {
        let n = p.rows();
        let mut q = QuadraticValue::with_scale(scale);
        let mut idx = 1 + n;
        for i in 0..n {
            for j in i..n {
                let s = q.scale[i] * q.scale[j];
                q.w[idx] = if i == j { p.get(i, i) * s } else { (p.get(i, j) + p.get(j, i)) * s };
                idx += 1;
            }
        }
        q
    }

    /// Symmetric matrix of the pure quadratic part, in unscaled coordinates.
    pub fn to_matrix(&self) -> Mat {
        let n = self.state_dim();
        let mut p = Mat::zeros(n, n);
        let mut idx = 1 + n;
        for i in 0..n {
            for j in i..n {
                let s = self.scale[i] * self.scale[j];
                if i == j {
                    p.set(i, i, self.w[idx] / s);
                } else {
                    p.set(i, j, 0.5 * self.w[idx] / s);
                    p.set(j, i, 0.5 * self.w[idx] / s);
                }
                idx += 1;
            }
        }
        p
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        let z: Vec<f64> = x.iter().zip(&self.scale).map(|(a, s)| a / s).collect();
        let mut phi = Vec::with_capacity(self.w.len());
        phi.push(1.0);
        phi.extend_from_slice(&z);
        for i in 0..n {
            for j in i..n {
                phi.push(z[i] * z[j]);
            }
        }
        phi
    }

    fn value(&self, x: &[f64]) -> f64 {
        crate::num::dot(&self.w, &self.features(x))
    }

    fn grad_x(&self, x: &[f64]) -> Vec<f64> {
        let n = self.state_dim();
        let z: Vec<f64> = x.iter().zip(&self.scale).map(|(a, s)| a / s).collect();
        let mut gz: Vec<f64> = self.w[1..=n].to_vec();
        let mut idx = 1 + n;
        for i in 0..n {
            for j in i..n {
                let wij = self.w[idx];
                gz[i] += wij * z[j];
                gz[j] += wij * z[i];
                idx += 1;
            }
        }
        gz.iter().zip(&self.scale).map(|(g, s)| g / s).collect()
    }
}

/// Critic function class.
#[derive(Clone, Debug, PartialEq)]
pub enum ValueFn {
    /// Network `x → scalar`.
    Mlp(Mlp),
    Quadratic(QuadraticValue),
}

impl ValueFn {
    /// One tanh hidden layer of `hidden` units, seeded uniform init.
    pub fn mlp<R: Rng + ?Sized>(state_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self, CriticError> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(ValueFn::Mlp(Mlp::random(&sizes, rng)?))
    }

    pub fn quadratic(scale: Vec<f64>) -> Self {
        ValueFn::Quadratic(QuadraticValue::with_scale(scale))
    }

    pub fn state_dim(&self) -> usize {
        match self {
            ValueFn::Mlp(net) => net.input_dim(),
            ValueFn::Quadratic(q) => q.state_dim(),
        }
    }

    pub fn num_params(&self) -> usize {
        match self {
            ValueFn::Mlp(net) => net.num_params(),
            ValueFn::Quadratic(q) => q.w.len(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            ValueFn::Mlp(net) => net.flatten(),
            ValueFn::Quadratic(q) => q.w.clone(),
        }
    }

    pub fn with_params(&self, w: &[f64]) -> Result<Self, CriticError> {
        if w.len() != self.num_params() {
            return Err(CriticError::ParamLength {
                expected: self.num_params(),
                got: w.len(),
            });
        }
        Ok(match self {
            ValueFn::Mlp(net) => ValueFn::Mlp(net.with_params(w)?),
            ValueFn::Quadratic(q) => ValueFn::Quadratic(QuadraticValue {
                scale: q.scale.clone(),
                w: w.to_vec(),
            }),
        })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ValueFn::Mlp(net) => net.forward(x).expect("critic state dimension")[0],
            ValueFn::Quadratic(q) => q.value(x),
        }
    }

    /// `∂V/∂x`
    pub fn grad_x(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ValueFn::Mlp(net) => net.vjp_input(x, &[1.0]).expect("critic state dimension"),
            ValueFn::Quadratic(q) => q.grad_x(x),
        }
    }

    /// `∂V/∂w`
    pub fn grad_w(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ValueFn::Mlp(net) => net.vjp_params(x, &[1.0]).expect("critic state dimension"),
            ValueFn::Quadratic(q) => q.features(x),
        }
    }

    /// `acc += scale · ∂V(x)/∂w`
    fn accumulate_grad_w(&self, x: &[f64], scale: f64, acc: &mut [f64]) {
        match self {
            ValueFn::Mlp(net) => net
                .accumulate_vjp_params(x, &[1.0], scale, acc)
                .expect("critic state dimension"),
            ValueFn::Quadratic(q) => axpy(scale, &q.features(x), acc),
        }
    }

    fn check_state(&self, x: &[f64]) -> Result<(), CriticError> {
        if x.len() != self.state_dim() {
            return Err(CriticError::StateDim {
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Bootstrap value `V(x')`, zero past an absorbing terminal.
fn bootstrap(vf: &ValueFn, t: &Transition) -> f64 {
    if t.terminal {
        0.0
    } else {
        vf.value(&t.x_next)
    }
}

/// `δ = c + γV(x') − V(x)`
pub fn td_residual(vf: &ValueFn, t: &Transition, gamma: f64) -> f64 {
    t.c + gamma * bootstrap(vf, t) - vf.value(&t.x)
}

fn check_batch<T: Borrow<Transition>>(vf: &ValueFn, batch: &[T]) -> Result<(), CriticError> {
    if batch.is_empty() {
        return Err(CriticError::EmptyBatch);
    }
    for t in batch {
        let t = t.borrow();
        vf.check_state(&t.x)?;
        vf.check_state(&t.x_next)?;
    }
    Ok(())
}

/// Mean squared TD residual over the batch.
pub fn loss_l1<T: Borrow<Transition>>(vf: &ValueFn, batch: &[T], gamma: f64) -> Result<f64, CriticError> {
    check_batch(vf, batch)?;
    let sum: f64 = batch
        .iter()
        .map(|t| td_residual(vf, t.borrow(), gamma).powi(2))
        .sum();
    Ok(sum / batch.len() as f64)
}

pub fn grad_l1<T: Borrow<Transition>>(
    vf: &ValueFn,
    batch: &[T],
    gamma: f64,
    mode: TdGradient,
) -> Result<Vec<f64>, CriticError> {
    check_batch(vf, batch)?;
    let scale = 2.0 / batch.len() as f64;
    let mut grad = vec![0.0; vf.num_params()];
    for t in batch {
        let t = t.borrow();
        let delta = td_residual(vf, t, gamma);
        if delta == 0.0 {
            continue;
        }
        if mode == TdGradient::Residual && !t.terminal {
            vf.accumulate_grad_w(&t.x_next, scale * delta * gamma, &mut grad);
        }
        vf.accumulate_grad_w(&t.x, -scale * delta, &mut grad);
    }
    Ok(grad)
}

/// `w ← w − α·grad`
pub fn update_w(vf: &ValueFn, grad: &[f64], step: f64) -> Result<ValueFn, CriticError> {
    if !(step > 0.0) {
        return Err(CriticError::InvalidStep(step));
    }
    let mut w = vf.params();
    if grad.len() != w.len() {
        return Err(CriticError::ParamLength {
            expected: w.len(),
            got: grad.len(),
        });
    }
    axpy(-step, grad, &mut w);
    vf.with_params(&w)
}
