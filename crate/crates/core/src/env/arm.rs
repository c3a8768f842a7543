use serde::{Deserialize, Serialize};

use super::{CostKind, Env, EnvError, EnvSpec};
use crate::num::Mat;

/// Two-link planar arm in a horizontal plane with point masses at the link
/// tips and viscous joint damping. State `(q1, q2, q̇1, q̇2)`, control is the
/// pair of joint torques.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanarArmParams {
    pub link_lengths: [f64; 2],
    pub link_masses: [f64; 2],
    pub damping: f64,
    pub dt: f64,
    pub torque_limit: f64,
    pub x0: Vec<f64>,
    pub reset_noise: Vec<f64>,
    /// End-effector goal in the plane.
    pub goal: [f64; 2],
    pub elbow_up: bool,
    pub obstacles: Vec<[f64; 2]>,
    pub safe_distance: f64,
    pub obstacle_weight: f64,
    pub task_horizon: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for PlanarArmParams {
    fn default() -> Self {
        PlanarArmParams {
            link_lengths: [1.0, 1.0],
            link_masses: [1.0, 1.0],
            damping: 0.5,
            dt: 0.02,
            torque_limit: 20.0,
            x0: vec![-0.5, 1.4, 0.0, 0.0],
            reset_noise: vec![0.0; 4],
            goal: [0.6, 1.5],
            elbow_up: false,
            obstacles: vec![[1.68, 0.77]],
            safe_distance: 0.35,
            obstacle_weight: 10.0,
            task_horizon: 100,
            beta: 1.0,
            gamma: 0.97,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlanarArm2Link {
    p: PlanarArmParams,
    spec: EnvSpec,
}

struct Dynamics {
    qdd: [f64; 2],
    minv: [[f64; 2]; 2],
}

impl PlanarArm2Link {
    pub fn new(p: PlanarArmParams) -> Result<Self, EnvError> {
        if p.x0.len() != 4 || p.reset_noise.len() != 4 {
            return Err(EnvError::InvalidParams("arm x0 and reset_noise need 4 entries".into()));
        }
        if p.link_lengths.iter().chain(&p.link_masses).any(|v| !(*v > 0.0)) {
            return Err(EnvError::InvalidParams("link lengths and masses must be positive".into()));
        }
        let spec = EnvSpec {
            state_dim: 4,
            control_dim: 2,
            dt: p.dt,
            task_horizon: p.task_horizon,
            control_bounds: vec![(-p.torque_limit, p.torque_limit); 2],
            beta: p.beta,
            gamma: p.gamma,
        };
        spec.validate()?;
        let arm = PlanarArm2Link { p, spec };
        arm.goal_joints()?;
        Ok(arm)
    }

    pub fn params(&self) -> &PlanarArmParams {
        &self.p
    }

    /// Elbow and end-effector positions.
    pub fn forward_kinematics(&self, q: &[f64]) -> ([f64; 2], [f64; 2]) {
        let [l1, l2] = self.p.link_lengths;
        let elbow = [l1 * q[0].cos(), l1 * q[0].sin()];
        let ee = [elbow[0] + l2 * (q[0] + q[1]).cos(), elbow[1] + l2 * (q[0] + q[1]).sin()];
        (elbow, ee)
    }

    pub fn goal_distance(&self, x: &[f64]) -> f64 {
        let (_, ee) = self.forward_kinematics(x);
        ((ee[0] - self.p.goal[0]).powi(2) + (ee[1] - self.p.goal[1]).powi(2)).sqrt()
    }

    /// Joint angles placing the end effector on the goal.
    pub fn goal_joints(&self) -> Result<[f64; 2], EnvError> {
        let [l1, l2] = self.p.link_lengths;
        let [gx, gy] = self.p.goal;
        let d = (gx * gx + gy * gy - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
        if !(-1.0..=1.0).contains(&d) {
            return Err(EnvError::InvalidParams(format!(
                "goal ({gx}, {gy}) is outside the arm's reach"
            )));
        }
        let q2 = if self.p.elbow_up { -d.acos() } else { d.acos() };
        let q1 = gy.atan2(gx) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
        Ok([q1, q2])
    }

    /// Obstacle-proximity penalty of a configuration.
    pub fn obstacle_penalty(&self, q: &[f64]) -> f64 {
        let (elbow, ee) = self.forward_kinematics(q);
        let segments = [([0.0, 0.0], elbow), (elbow, ee)];
        let mut total = 0.0;
        for o in &self.p.obstacles {
            for (a, b) in &segments {
                let gap = self.p.safe_distance - point_segment_distance(*o, *a, *b);
                if gap > 0.0 {
                    total += gap * gap;
                }
            }
        }
        self.p.obstacle_weight * total
    }

    fn eval(&self, x: &[f64], tau: &[f64]) -> Dynamics {
        let [l1, l2] = self.p.link_lengths;
        let [m1, m2] = self.p.link_masses;
        let (s2, c2) = x[1].sin_cos();
        let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
        let m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
        let m22 = m2 * l2 * l2;
        let det = m11 * m22 - m12 * m12;
        let minv = [[m22 / det, -m12 / det], [-m12 / det, m11 / det]];
        let h = m2 * l1 * l2 * s2;
        let (w1, w2) = (x[2], x[3]);
        let coriolis = [-h * (2.0 * w1 * w2 + w2 * w2), h * w1 * w1];
        let rhs = [
            tau[0] - coriolis[0] - self.p.damping * w1,
            tau[1] - coriolis[1] - self.p.damping * w2,
        ];
        let qdd = [
            minv[0][0] * rhs[0] + minv[0][1] * rhs[1],
            minv[1][0] * rhs[0] + minv[1][1] * rhs[1],
        ];
        Dynamics { qdd, minv }
    }
}

fn point_segment_distance(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ao = [o[0] - a[0], o[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ao[0] * ab[0] + ao[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d = [ao[0] - t * ab[0], ao[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

impl Env for PlanarArm2Link {
    fn name(&self) -> &'static str {
        "planar_arm"
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
        let d = self.eval(x, u);
        let w1 = x[2] + dt * d.qdd[0];
        let w2 = x[3] + dt * d.qdd[1];
        vec![x[0] + dt * w1, x[1] + dt * w2, w1, w2]
    }

    fn jac_f_u(&self, x: &[f64], u: &[f64]) -> Mat {
        let dt = self.p.dt;
        let d = self.eval(x, u);
        let mut j = Mat::zeros(4, 2);
        for r in 0..2 {
            for c in 0..2 {
                j.set(r, c, dt * dt * d.minv[r][c]);
                j.set(r + 2, c, dt * d.minv[r][c]);
            }
        }
        j
    }

    fn cost(&self, kind: CostKind, x: &[f64], _u: &[f64]) -> f64 {
        match kind {
            CostKind::Original => self.goal_distance(x).powi(2),
            CostKind::Additional => self.obstacle_penalty(x),
        }
    }

    fn cost_grad_u(&self, _kind: CostKind, _x: &[f64], _u: &[f64]) -> Vec<f64> {
        vec![0.0; 2]
    }
}
