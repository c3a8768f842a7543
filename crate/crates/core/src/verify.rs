//! Self-contained oracle suites: analytic gradients against finite
//! differences, Lyapunov and Riccati fixed points against independent
//! solutions, and replay sampling against the uniform law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::actor::{grad_l2, surrogate_l2, ActionMode, EnvCost, MlpPolicy, Policy};
use crate::critic::{grad_l1, loss_l1, TdGradient, ValueFn};
use crate::dynamics::AnalyticDynamics;
use crate::env::{CostKind, LinearQuadratic, Transition};
use crate::lqr::{dare_residual, policy_value_matrix, solve_dare};
use crate::num::{finite_diff_check, Mat, Mlp};
use crate::trainer::ReplayBuffer;

pub const GRAD_TOL: f64 = 1e-4;
pub const RICCATI_TOL: f64 = 1e-8;
pub const DARE_RESIDUAL_TOL: f64 = 1e-9;
pub const LYAPUNOV_TOL: f64 = 1e-9;

/// Deliberate fault injection, used to confirm a suite can fail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Mutation {
    #[default]
    None,
    FlipGradL2Sign,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn below(suite: &'static str, name: &'static str, metric: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult {
        suite,
        name,
        passed: metric.is_finite() && metric < threshold,
        metric,
        threshold,
        detail,
    }
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, s: f64) -> Mat {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-s..s)).collect()).expect("shape")
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-s..s)).collect()
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, m: usize, len: usize) -> Vec<Transition> {
    (0..len)
        .map(|_| {
            let mut t = Transition::new(random_vec(rng, n, 1.0), random_vec(rng, m, 1.0), rng.random_range(0.0..2.0), random_vec(rng, n, 1.0));
            t.terminal = rng.random_bool(0.1);
            t
        })
        .collect()
}

/// Residual-gradient TD loss against central differences, on random MLP
/// critics and random batches.
pub fn critic_gradient(cases: usize, seed: u64) -> CheckResult {
    let (n, m, width, batch_len, gamma) = (4, 1, 8, 16, 0.95);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let vf = ValueFn::mlp(n, &[width], &mut rng).expect("critic");
        let batch = random_batch(&mut rng, n, m, batch_len);
        let analytic = grad_l1(&vf, &batch, gamma, TdGradient::Residual).expect("grad_l1");
        let f = |w: &[f64]| loss_l1(&vf.with_params(w).expect("params"), &batch, gamma).expect("loss_l1");
        let rep = finite_diff_check(f, &vf.params(), &analytic, 1e-5).expect("fd");
        worst = worst.max(rep.max_rel_error);
    }
    below("gradient_fidelity", "critic_td_loss", worst, GRAD_TOL, format!("{cases} cases, max relative error"))
}

/// Recompute-mode policy gradient against central differences of the
/// composed one-step objective on a random 4-state LQ system.
pub fn actor_gradient(cases: usize, seed: u64, mutation: Mutation) -> CheckResult {
    let (n, m, width, batch_len, gamma) = (4, 1, 8, 16, 0.95);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let a = random_mat(&mut rng, n, n, 0.6);
        let b = random_mat(&mut rng, n, m, 1.0);
        let lq = random_mat(&mut rng, n, n, 1.0);
        let q = lq.transpose().matmul(&lq).add(&Mat::identity(n).scale(0.1));
        let r = Mat::identity(m).scale(rng.random_range(0.1..1.0));
        let env = LinearQuadratic::from_matrices(&a, &b, &q, &r, vec![0.0; n], gamma).expect("env");
        let dynamics = AnalyticDynamics(&env);
        let cost = EnvCost { env: &env, kind: CostKind::Additional };
        let vf = ValueFn::mlp(n, &[width], &mut rng).expect("critic");
        let net = Mlp::random(&[n, width, m], &mut rng).expect("policy net");
        let policy = Policy::Mlp(MlpPolicy::new(net, &[(-2.0, 2.0)]).expect("policy"));
        let batch = random_batch(&mut rng, n, m, batch_len);
        let mut analytic =
            grad_l2(&batch, &policy, &vf, &dynamics, &cost, gamma, ActionMode::Recompute).expect("grad_l2");
        if mutation == Mutation::FlipGradL2Sign {
            analytic.iter_mut().for_each(|g| *g = -*g);
        }
        let f = |th: &[f64]| {
            surrogate_l2(&batch, &policy.with_params(th).expect("params"), &vf, &dynamics, &cost, gamma)
                .expect("surrogate")
        };
        let rep = finite_diff_check(f, &policy.params(), &analytic, 1e-5).expect("fd");
        worst = worst.max(rep.max_rel_error);
    }
    below("gradient_fidelity", "actor_one_step", worst, GRAD_TOL, format!("{cases} cases, max relative error"))
}

/// Discounted policy value from the fixed-point iteration against a direct
/// Kronecker-form solve of the same Lyapunov equation.
pub fn lyapunov(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(1..=2);
        let a = random_mat(&mut rng, n, n, 0.8);
        let b = random_mat(&mut rng, n, m, 1.0);
        let q = Mat::identity(n);
        let r = Mat::identity(m);
        let gamma = rng.random_range(0.8..0.99);
        let k = solve_dare(&a, &b, &q, &r, 1.0, 1e-13, 500_000).expect("stabilizing gain").k;
        let p = policy_value_matrix(&a, &b, &q, &r, &k, gamma, 1e-14, 1_000_000).expect("policy value");

        // vec(P) = (I − γ Mᵀ⊗Mᵀ)⁻¹ vec(Q + KᵀRK), M = A − BK
        let closed = a.sub(&b.matmul(&k));
        let rhs = q.add(&k.transpose().matmul(&r).matmul(&k));
        let mut lhs = Mat::identity(n * n);
        for i in 0..n {
            for j in 0..n {
                for s in 0..n {
                    for t in 0..n {
                        let v = lhs.get(i * n + j, s * n + t) - gamma * closed.get(s, i) * closed.get(t, j);
                        lhs.set(i * n + j, s * n + t, v);
                    }
                }
            }
        }
        let direct = lhs.solve(&Mat::column(rhs.as_slice())).expect("kronecker solve");
        let err = direct
            .as_slice()
            .iter()
            .zip(p.as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
            / p.max_abs();
        worst = worst.max(err);
    }
    below("lyapunov", "policy_value_vs_kronecker", worst, LYAPUNOV_TOL, format!("{cases} systems, max relative entry error"))
}

/// The scalar system with `a = b = q = r = 1` has `P² = P + 1`.
pub fn riccati_scalar() -> CheckResult {
    let one = Mat::identity(1);
    let sol = solve_dare(&one, &one, &one, &one, 1.0, 1e-15, 10_000).expect("scalar DARE");
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let err = (sol.p.get(0, 0) - golden).abs().max((sol.k.get(0, 0) - 1.0 / golden).abs());
    below("riccati", "scalar_golden_ratio", err, RICCATI_TOL, format!("P = {:.15}, K = {:.15}", sol.p.get(0, 0), sol.k.get(0, 0)))
}

pub fn riccati_random(cases: usize, seed: u64) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.random_range(2..=4);
        let m = rng.random_range(1..=2);
        let a = random_mat(&mut rng, n, n, 0.8);
        let b = random_mat(&mut rng, n, m, 1.0);
        let lq = random_mat(&mut rng, n, n, 1.0);
        let q = lq.transpose().matmul(&lq).add(&Mat::identity(n).scale(0.1));
        let r = Mat::identity(m).scale(rng.random_range(0.5..2.0));
        let beta = rng.random_range(0.9..1.0);
        let sol = match solve_dare(&a, &b, &q, &r, beta, 1e-13, 500_000) {
            Ok(s) => s,
            Err(_) => return below("riccati", "random_dare_residual", f64::INFINITY, DARE_RESIDUAL_TOL, "solver did not converge".into()),
        };
        let res = dare_residual(&a, &b, &q, &r, beta, &sol.p).expect("residual");
        worst = worst.max(res);
    }
    below("riccati", "random_dare_residual", worst, DARE_RESIDUAL_TOL, format!("{cases} systems, max Frobenius residual"))
}

/// Slot counts after wrap-around against the binomial law: every count lies
/// within 5σ of its mean and the chi-square statistic within 5σ of its
/// degrees of freedom.
pub fn replay_uniformity(seed: u64) -> CheckResult {
    let (capacity, pushes, draws) = (100usize, 257usize, 200_000usize);
    let mut buf = ReplayBuffer::new(capacity);
    for i in 0..pushes {
        buf.push(Transition::new(vec![i as f64], vec![0.0], 0.0, vec![0.0]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0usize; capacity];
    for i in buf.sample_indices(draws, &mut rng) {
        counts[i] += 1;
    }
    let p = 1.0 / capacity as f64;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    let max_z = counts.iter().map(|c| (*c as f64 - mean).abs() / sigma).fold(0.0, f64::max);
    let chi2: f64 = counts.iter().map(|c| (*c as f64 - mean).powi(2) / mean).sum();
    let dof = (capacity - 1) as f64;
    let chi2_z = (chi2 - dof) / (2.0 * dof).sqrt();
    let metric = max_z.max(chi2_z.abs());
    below("replay_uniformity", "slot_counts", metric, 5.0, format!("max slot z = {max_z:.2}, chi-square = {chi2:.1} on {dof} dof"))
}

pub fn run_all(mutation: Mutation) -> VerifyReport {
    let checks = vec![
        critic_gradient(100, 11),
        actor_gradient(100, 12, mutation),
        lyapunov(20, 13),
        riccati_scalar(),
        riccati_random(20, 14),
        replay_uniformity(15),
    ];
    VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
