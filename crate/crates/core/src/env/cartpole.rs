use serde::{Deserialize, Serialize};

use super::{CostKind, Env, EnvError, EnvSpec};
use crate::num::Mat;

/// Continuous-force cart-pole. State `(p, ṗ, φ, φ̇)` with `φ = 0` upright.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    /// kg
    pub mass_cart: f64,
    /// kg
    pub mass_pole: f64,
    /// m
    pub half_length: f64,
    /// m/s²
    pub gravity: f64,
    /// s
    pub dt: f64,
    /// N, symmetric
    pub force_limit: f64,
    pub angle_limit: f64,
    pub position_limit: f64,
    pub x0: Vec<f64>,
    pub reset_noise: Vec<f64>,
    /// Desired cart stopping position p*.
    pub target_position: f64,
    pub position_weight: f64,
    pub control_weight: f64,
    pub task_horizon: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            gravity: 9.8,
            dt: 0.02,
            force_limit: 10.0,
            angle_limit: 0.209,
            position_limit: 2.4,
            x0: vec![0.0, 0.0, 0.05, 0.0],
            reset_noise: vec![0.0; 4],
            target_position: 1.0,
            position_weight: 1.0,
            control_weight: 0.01,
            task_horizon: 500,
            beta: 1.0,
            gamma: 0.99,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CartPole {
    p: CartPoleParams,
    spec: EnvSpec,
}

struct Accel {
    cart: f64,
    pole: f64,
    /// ∂(cart accel)/∂F
    cart_f: f64,
    /// ∂(pole accel)/∂F
    pole_f: f64,
}

impl CartPole {
    pub fn new(p: CartPoleParams) -> Result<Self, EnvError> {
        if p.x0.len() != 4 || p.reset_noise.len() != 4 {
            return Err(EnvError::InvalidParams("cart-pole x0 and reset_noise need 4 entries".into()));
        }
        if !(p.mass_cart > 0.0 && p.mass_pole > 0.0 && p.half_length > 0.0) {
            return Err(EnvError::InvalidParams("masses and length must be positive".into()));
        }
        let spec = EnvSpec {
            state_dim: 4,
            control_dim: 1,
            dt: p.dt,
            task_horizon: p.task_horizon,
            control_bounds: vec![(-p.force_limit, p.force_limit)],
            beta: p.beta,
            gamma: p.gamma,
        };
        spec.validate()?;
        Ok(CartPole { p, spec })
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.p
    }

    fn total_mass(&self) -> f64 {
        self.p.mass_cart + self.p.mass_pole
    }

    fn accel(&self, x: &[f64], force: f64) -> Accel {
        let (s, c) = x[2].sin_cos();
        let m = self.total_mass();
        let pml = self.p.mass_pole * self.p.half_length;
        let temp = (force + pml * x[3] * x[3] * s) / m;
        let den = self.p.half_length * (4.0 / 3.0 - self.p.mass_pole * c * c / m);
        let pole = (self.p.gravity * s - c * temp) / den;
        let cart = temp - pml * pole * c / m;
        let pole_f = -c / (m * den);
        let cart_f = 1.0 / m - pml * c * pole_f / m;
        Accel {
            cart,
            pole,
            cart_f,
            pole_f,
        }
    }

    /// Exact `(A, B)` of the semi-implicit map at the upright equilibrium.
    pub fn upright_linearization(&self) -> (Mat, Mat) {
        let dt = self.p.dt;
        let m = self.total_mass();
        let l = self.p.half_length;
        let mp = self.p.mass_pole;
        let den0 = l * (4.0 / 3.0 - mp / m);
        let pole_phi = self.p.gravity / den0;
        let pole_f = -1.0 / (m * den0);
        let cart_phi = -mp * l * pole_phi / m;
        let cart_f = 1.0 / m - mp * l * pole_f / m;
        let a = Mat::from_rows(&[
            &[1.0, dt, dt * dt * cart_phi, 0.0],
            &[0.0, 1.0, dt * cart_phi, 0.0],
            &[0.0, 0.0, 1.0 + dt * dt * pole_phi, dt],
            &[0.0, 0.0, dt * pole_phi, 1.0],
        ]);
        let b = Mat::from_rows(&[&[dt * dt * cart_f], &[dt * cart_f], &[dt * dt * pole_f], &[dt * pole_f]]);
        (a, b)
    }
}

impl Env for CartPole {
    fn name(&self) -> &'static str {
        "cart_pole"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self) -> Vec<f64> {
        self.p.x0.clone()
    }

    fn reset_noise(&self) -> &[f64] {
        &self.p.reset_noise
    }

    fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let dt = self.p.dt;
        let acc = self.accel(x, u[0]);
        let v = x[1] + dt * acc.cart;
        let w = x[3] + dt * acc.pole;
        vec![x[0] + dt * v, v, x[2] + dt * w, w]
    }

    fn jac_f_u(&self, x: &[f64], u: &[f64]) -> Mat {
        let dt = self.p.dt;
        let acc = self.accel(x, u[0]);
        Mat::from_rows(&[
            &[dt * dt * acc.cart_f],
            &[dt * acc.cart_f],
            &[dt * dt * acc.pole_f],
            &[dt * acc.pole_f],
        ])
    }

    fn cost(&self, kind: CostKind, x: &[f64], u: &[f64]) -> f64 {
        match kind {
            CostKind::Original => {
                if self.is_terminal(x) {
                    0.0
                } else {
                    -1.0
                }
            }
            CostKind::Additional => {
                let e = x[0] - self.p.target_position;
                self.p.position_weight * e * e + self.p.control_weight * u[0] * u[0]
            }
        }
    }

    fn cost_grad_u(&self, kind: CostKind, _x: &[f64], u: &[f64]) -> Vec<f64> {
        match kind {
            CostKind::Original => vec![0.0],
            CostKind::Additional => vec![2.0 * self.p.control_weight * u[0]],
        }
    }

    fn is_terminal(&self, x: &[f64]) -> bool {
        x[2].abs() > self.p.angle_limit || x[0].abs() > self.p.position_limit
    }

    fn linearize(&self, x_eq: &[f64], u_eq: &[f64]) -> (Mat, Mat) {
        if x_eq.iter().chain(u_eq).all(|v| *v == 0.0) {
            return self.upright_linearization();
        }
        let n = self.spec.state_dim;
        let mut a = Mat::zeros(n, n);
        for row in 0..n {
            let g = crate::num::central_difference(|x| self.dynamics(x, u_eq)[row], x_eq, 1e-6);
            for (col, v) in g.into_iter().enumerate() {
                a.set(row, col, v);
            }
        }
        (a, self.jac_f_u(x_eq, u_eq))
    }
}
