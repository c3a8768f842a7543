use serde::{Deserialize, Serialize};

use super::{check_dim, CostKind, Env, EnvError, EnvSpec};
use crate::num::Mat;

/// `x' = Ax + Bu`, `l = xᵀQx + uᵀRu`, `c = (x-x*)ᵀQc(x-x*) + uᵀRc u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearQuadraticParams {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub q_c: Vec<Vec<f64>>,
    pub r_c: Vec<Vec<f64>>,
    pub x_target: Vec<f64>,
    pub x0: Vec<f64>,
    pub reset_noise: Vec<f64>,
    pub task_horizon: usize,
    pub control_limit: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LinearQuadraticParams {
    fn default() -> Self {
        // sampled double integrator, dt = 0.1
        LinearQuadraticParams {
            a: vec![vec![1.0, 0.1], vec![0.0, 1.0]],
            b: vec![vec![0.005], vec![0.1]],
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            r: vec![vec![0.1]],
            q_c: vec![vec![2.0, 0.0], vec![0.0, 0.2]],
            r_c: vec![vec![1.0]],
            x_target: vec![0.0, 0.0],
            x0: vec![1.0, 0.0],
            reset_noise: vec![0.0, 0.0],
            task_horizon: 100,
            control_limit: 1e6,
            beta: 1.0,
            gamma: 0.95,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LinearQuadratic {
    params: LinearQuadraticParams,
    spec: EnvSpec,
    a: Mat,
    b: Mat,
    q: Mat,
    r: Mat,
    q_c: Mat,
    r_c: Mat,
}

fn to_mat(name: &str, rows: &[Vec<f64>], shape: (usize, usize)) -> Result<Mat, EnvError> {
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(EnvError::InvalidParams(format!(
            "{name} must be {}x{}",
            shape.0, shape.1
        )));
    }
    Mat::from_vec(shape.0, shape.1, data).map_err(|e| EnvError::InvalidParams(e.to_string()))
}

impl LinearQuadratic {
    pub fn new(params: LinearQuadraticParams) -> Result<Self, EnvError> {
        let n = params.a.len();
        let m = params.b.first().map_or(0, |r| r.len());
        let a = to_mat("a", &params.a, (n, n))?;
        let b = to_mat("b", &params.b, (n, m))?;
        let q = to_mat("q", &params.q, (n, n))?;
        let r = to_mat("r", &params.r, (m, m))?;
        let q_c = to_mat("q_c", &params.q_c, (n, n))?;
        let r_c = to_mat("r_c", &params.r_c, (m, m))?;
        for (name, v) in [
            ("x_target", &params.x_target),
            ("x0", &params.x0),
            ("reset_noise", &params.reset_noise),
        ] {
            if v.len() != n {
                return Err(EnvError::InvalidParams(format!("{name} must have length {n}")));
            }
        }
        let spec = EnvSpec {
            state_dim: n,
            control_dim: m,
            dt: 1.0,
            task_horizon: params.task_horizon,
            control_bounds: vec![(-params.control_limit, params.control_limit); m],
            beta: params.beta,
            gamma: params.gamma,
        };
        spec.validate()?;
        Ok(LinearQuadratic {
            params,
            spec,
            a,
            b,
            q,
            r,
            q_c,
            r_c,
        })
    }

    /// Builds directly from matrices; reset at `x0` with no perturbation.
    pub fn from_matrices(a: &Mat, b: &Mat, q_c: &Mat, r_c: &Mat, x0: Vec<f64>, gamma: f64) -> Result<Self, EnvError> {
        let rows = |m: &Mat| (0..m.rows()).map(|i| m.row(i).to_vec()).collect::<Vec<_>>();
        let n = a.rows();
        LinearQuadratic::new(LinearQuadraticParams {
            a: rows(a),
            b: rows(b),
            q: rows(q_c),
            r: rows(r_c),
            q_c: rows(q_c),
            r_c: rows(r_c),
            x_target: vec![0.0; n],
            reset_noise: vec![0.0; n],
            x0,
            task_horizon: 100,
            control_limit: 1e6,
            beta: 1.0,
            gamma,
        })
    }

    pub fn params(&self) -> &LinearQuadraticParams {
        &self.params
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn q(&self) -> &Mat {
        &self.q
    }

    pub fn r(&self) -> &Mat {
        &self.r
    }

    pub fn q_c(&self) -> &Mat {
        &self.q_c
    }

    pub fn r_c(&self) -> &Mat {
        &self.r_c
    }

    pub fn x_target(&self) -> &[f64] {
        &self.params.x_target
    }
}

fn quad(m: &Mat, v: &[f64]) -> f64 {
    crate::num::dot(v, &m.mul_vec(v))
}

impl Env for LinearQuadratic {
    fn name(&self) -> &'static str {
        "linear_quadratic"
    }

    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn initial_state(&self) -> Vec<f64> {
        self.params.x0.clone()
    }

    fn reset_noise(&self) -> &[f64] {
        &self.params.reset_noise
    }

    fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut next = self.a.mul_vec(x);
        for (n, bu) in next.iter_mut().zip(self.b.mul_vec(u)) {
            *n += bu;
        }
        next
    }

    fn jac_f_u(&self, _x: &[f64], _u: &[f64]) -> Mat {
        self.b.clone()
    }

    fn cost(&self, kind: CostKind, x: &[f64], u: &[f64]) -> f64 {
        match kind {
            CostKind::Original => quad(&self.q, x) + quad(&self.r, u),
            CostKind::Additional => {
                let e: Vec<f64> = x.iter().zip(&self.params.x_target).map(|(a, t)| a - t).collect();
                quad(&self.q_c, &e) + quad(&self.r_c, u)
            }
        }
    }

    fn cost_grad_u(&self, kind: CostKind, _x: &[f64], u: &[f64]) -> Vec<f64> {
        let r = match kind {
            CostKind::Original => &self.r,
            CostKind::Additional => &self.r_c,
        };
        // (R + Rᵀ) u
        let ru = r.mul_vec(u);
        let rtu = r.tr_mul_vec(u);
        ru.iter().zip(rtu).map(|(a, b)| a + b).collect()
    }

    fn linearize(&self, x_eq: &[f64], _u_eq: &[f64]) -> (Mat, Mat) {
        debug_assert!(check_dim("state", self.spec.state_dim, x_eq.len()).is_ok());
        (self.a.clone(), self.b.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::contract;

    #[test]
    fn step_is_exact_linear_map() {
        let env = LinearQuadratic::new(LinearQuadraticParams::default()).unwrap();
        let x = [0.3, -1.2];
        let u = [0.7];
        let s = env.step(&x, &u).unwrap();
        let expected = [1.0 * 0.3 + 0.1 * -1.2 + 0.005 * 0.7, -1.2 + 0.1 * 0.7];
        assert_eq!(s.next_state, expected.to_vec());
        assert_eq!(env.jac_f_u(&x, &u), *env.b());
        assert!(!s.done);
    }

    #[test]
    fn reset_is_configured_x0() {
        let env = LinearQuadratic::new(LinearQuadraticParams::default()).unwrap();
        assert_eq!(env.reset(1), vec![1.0, 0.0]);
        assert_eq!(env.reset(2), vec![1.0, 0.0]);

        let mut p = LinearQuadraticParams::default();
        p.reset_noise = vec![0.5, 0.5];
        let noisy = LinearQuadratic::new(p).unwrap();
        assert_eq!(noisy.reset(5), noisy.reset(5));
        assert_ne!(noisy.reset(5), noisy.reset(6));
    }

    #[test]
    fn costs_and_gradients() {
        let env = LinearQuadratic::new(LinearQuadraticParams::default()).unwrap();
        let x = [1.0, 2.0];
        let u = [0.5];
        assert!((env.cost(CostKind::Original, &x, &u) - (5.0 + 0.025)).abs() < 1e-15);
        assert!((env.cost(CostKind::Additional, &x, &u) - (2.0 + 0.8 + 0.25)).abs() < 1e-15);
        assert_eq!(env.cost_grad_u(CostKind::Additional, &x, &u), vec![1.0]);
        assert_eq!(env.cost(CostKind::Additional, &[0.0, 0.0], &[0.0]), 0.0);
        contract::jacobian_matches_fd(&env, 3, &[2.0, 2.0], 50);
        contract::deterministic(&env, &vec![vec![0.3]; 20]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut p = LinearQuadraticParams::default();
        p.b = vec![vec![1.0]];
        assert!(LinearQuadratic::new(p).is_err());
    }
}
