use serde::{Deserialize, Serialize};

use super::{CostKind, Env, EnvError, EnvSpec};
use crate::num::Mat;

/// Planar point-mass lander `(px, py, vx, vy)` with two thrusters tilted
/// symmetrically by `thruster_tilt` from vertical. Control is
/// `(left, right)` thrust in newtons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LanderParams {
    pub mass: f64,
    pub gravity: f64,
    /// rad
    pub thruster_tilt: f64,
    pub max_thrust: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
    pub reset_noise: Vec<f64>,
    pub pad_x: f64,
    /// Hover altitude h*.
    pub hover_altitude: f64,
    pub hover_velocity_weight: f64,
    pub hover_control_weight: f64,
    /// Sets the original landing cost to zero.
    pub task_switch: bool,
    pub x_limit: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub task_horizon: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LanderParams {
    fn default() -> Self {
        LanderParams {
            mass: 1.0,
            gravity: 1.62,
            thruster_tilt: 0.3,
            max_thrust: 3.0,
            dt: 0.05,
            x0: vec![0.5, 1.5, 0.0, 0.0],
            reset_noise: vec![0.0; 4],
            pad_x: 0.0,
            hover_altitude: 1.0,
            hover_velocity_weight: 0.1,
            hover_control_weight: 0.001,
            task_switch: false,
            x_limit: 5.0,
            y_min: -0.5,
            y_max: 10.0,
            task_horizon: 300,
            beta: 1.0,
            gamma: 0.98,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LanderLite {
    p: LanderParams,
    spec: EnvSpec,
    /// force = mix · u
    mix: Mat,
}

impl LanderLite {
    pub fn new(p: LanderParams) -> Result<Self, EnvError> {
        if p.x0.len() != 4 || p.reset_noise.len() != 4 {
            return Err(EnvError::InvalidParams("lander x0 and reset_noise need 4 entries".into()));
        }
        if !(p.mass > 0.0) || !(p.thruster_tilt.cos() > 0.0) {
            return Err(EnvError::InvalidParams("mass must be positive and thrusters point up".into()));
        }
        let spec = EnvSpec {
            state_dim: 4,
            control_dim: 2,
            dt: p.dt,
            task_horizon: p.task_horizon,
            control_bounds: vec![(0.0, p.max_thrust); 2],
            beta: p.beta,
            gamma: p.gamma,
        };
        spec.validate()?;
        let (s, c) = p.thruster_tilt.sin_cos();
        let mix = Mat::from_rows(&[&[s, -s], &[c, c]]);
        Ok(LanderLite { p, spec, mix })
    }

    pub fn params(&self) -> &LanderParams {
        &self.p
    }

    pub fn thrust_mixing(&self) -> &Mat {
        &self.mix
    }

    /// Per-thruster thrust that exactly cancels gravity.
    pub fn hover_thrust(&self) -> f64 {
        self.p.mass * self.p.gravity / (2.0 * self.p.thruster_tilt.cos())
    }

    pub fn landing_target(&self) -> Vec<f64> {
        vec![self.p.pad_x, 0.0, 0.0, 0.0]
    }
}

impl Env for LanderLite {
    fn name(&self) -> &'static str {
        "lander_lite"
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
        let f = self.mix.mul_vec(u);
        let vx = x[2] + dt * f[0] / self.p.mass;
        let vy = x[3] + dt * (f[1] / self.p.mass - self.p.gravity);
        vec![x[0] + dt * vx, x[1] + dt * vy, vx, vy]
    }

    fn jac_f_u(&self, _x: &[f64], _u: &[f64]) -> Mat {
        let dt = self.p.dt;
        let k = dt / self.p.mass;
        let mut j = Mat::zeros(4, 2);
        for c in 0..2 {
            j.set(0, c, dt * k * self.mix.get(0, c));
            j.set(1, c, dt * k * self.mix.get(1, c));
            j.set(2, c, k * self.mix.get(0, c));
            j.set(3, c, k * self.mix.get(1, c));
        }
        j
    }

    fn cost(&self, kind: CostKind, x: &[f64], u: &[f64]) -> f64 {
        match kind {
            CostKind::Original => {
                if self.p.task_switch {
                    return 0.0;
                }
                let h = self.hover_thrust();
                let dx = x[0] - self.p.pad_x;
                dx * dx
                    + x[1] * x[1]
                    + 0.1 * (x[2] * x[2] + x[3] * x[3])
                    + 0.001 * u.iter().map(|ui| (ui - h) * (ui - h)).sum::<f64>()
            }
            CostKind::Additional => {
                let dy = x[1] - self.p.hover_altitude;
                dy * dy
                    + self.p.hover_velocity_weight * (x[2] * x[2] + x[3] * x[3])
                    + self.p.hover_control_weight * u.iter().map(|ui| ui * ui).sum::<f64>()
            }
        }
    }

    fn cost_grad_u(&self, kind: CostKind, _x: &[f64], u: &[f64]) -> Vec<f64> {
        match kind {
            CostKind::Original if self.p.task_switch => vec![0.0; 2],
            CostKind::Original => {
                let h = self.hover_thrust();
                u.iter().map(|ui| 0.002 * (ui - h)).collect()
            }
            CostKind::Additional => u.iter().map(|ui| 2.0 * self.p.hover_control_weight * ui).collect(),
        }
    }

    fn is_terminal(&self, x: &[f64]) -> bool {
        x[0].abs() > self.p.x_limit || x[1] < self.p.y_min || x[1] > self.p.y_max
    }

    fn linearize(&self, _x_eq: &[f64], u_eq: &[f64]) -> (Mat, Mat) {
        let dt = self.p.dt;
        let a = Mat::from_rows(&[
            &[1.0, 0.0, dt, 0.0],
            &[0.0, 1.0, 0.0, dt],
            &[0.0, 0.0, 1.0, 0.0],
            &[0.0, 0.0, 0.0, 1.0],
        ]);
        (a, self.jac_f_u(&[0.0; 4], u_eq))
    }
}
