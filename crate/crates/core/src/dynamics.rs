//! Sources of the one-step map and its control Jacobian: the environment's
//! analytic model, or a learned surrogate `x' = x + Δ(x, u; ξ)`.

use std::borrow::Borrow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Env, Transition};
use crate::num::{axpy, central_difference, Adam, Mat, Mlp, NumError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("cannot fit a dynamics model to an empty dataset")]
    EmptyDataset,
    #[error("transition {index}: {what} has length {got}, expected {expected}")]
    Dimension {
        index: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("dynamics fit diverged at epoch {0}")]
    Diverged(usize),
    #[error("invalid fit settings: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// The map `x' = f(x, u)` and `∂f/∂u` as seen by the policy gradient.
pub trait DynamicsSource: Send + Sync {
    fn predict(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    fn jac_u(&self, x: &[f64], u: &[f64]) -> Mat;
}

/// The environment's own dynamics, without control clamping.
pub struct AnalyticDynamics<'a>(pub &'a dyn Env);

impl DynamicsSource for AnalyticDynamics<'_> {
    fn predict(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.0.dynamics(x, u)
    }

    fn jac_u(&self, x: &[f64], u: &[f64]) -> Mat {
        self.0.jac_f_u(x, u)
    }
}

/// `(A, B)` of `source` at `(x_eq, u_eq)`: central differences of
/// `predict` for `A`, `jac_u` for `B`.
pub fn linearize(source: &dyn DynamicsSource, x_eq: &[f64], u_eq: &[f64]) -> (Mat, Mat) {
    let n = x_eq.len();
    let mut a = Mat::zeros(n, n);
    for row in 0..n {
        let grad = central_difference(|x| source.predict(x, u_eq)[row], x_eq, 1e-5);
        for (col, g) in grad.into_iter().enumerate() {
            a.set(row, col, g);
        }
    }
    (a, source.jac_u(x_eq, u_eq))
}

/// Per-dimension affine normalization `z = (v − mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Normalizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Sample mean and standard deviation; near-constant dimensions keep
    /// unit scale.
    pub fn fit<'a, I: IntoIterator<Item = &'a [f64]>>(dim: usize, rows: I) -> Self {
        let mut count = 0.0;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for row in rows {
            count += 1.0;
            for i in 0..dim {
                let d = row[i] - mean[i];
                mean[i] += d / count;
                m2[i] += d * (row[i] - mean[i]);
            }
        }
        let scale = m2
            .iter()
            .map(|s| {
                let sd = if count > 0.0 { (s / count).sqrt() } else { 0.0 };
                if sd > 1e-8 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Normalizer { mean, scale }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((z, m), s)| m + s * z)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Plain gradient descent.
    Gd,
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Minibatch size; `None` trains on the full dataset every epoch.
    pub batch_size: Option<usize>,
    pub optimizer: Optimizer,
    /// Recompute normalization statistics from the data before fitting.
    pub refresh_stats: bool,
    /// Minibatch shuffling seed.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            epochs: 200,
            lr: 1e-3,
            batch_size: Some(64),
            optimizer: Optimizer::Adam,
            refresh_stats: true,
            seed: 0,
        }
    }
}

/// Learned one-step model predicting the normalized state increment from
/// the normalized `(x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DynModel {
    n: usize,
    m: usize,
    net: Mlp,
    input_norm: Normalizer,
    output_norm: Normalizer,
}

impl DynModel {
    /// Randomly initialized network with the given hidden widths and
    /// identity normalization.
    pub fn new<R: Rng + ?Sized>(n: usize, m: usize, hidden: &[usize], rng: &mut R) -> Result<Self, DynError> {
        let mut sizes = vec![n + m];
        sizes.extend_from_slice(hidden);
        sizes.push(n);
        Self::from_parts(
            Mlp::random(&sizes, rng)?,
            Normalizer::identity(n + m),
            Normalizer::identity(n),
        )
    }

    pub fn from_parts(net: Mlp, input_norm: Normalizer, output_norm: Normalizer) -> Result<Self, DynError> {
        let n = net.output_dim();
        let in_dim = net.input_dim();
        if in_dim <= n {
            return Err(DynError::InvalidConfig(format!(
                "network input {in_dim} must exceed its output {n}"
            )));
        }
        let norm_ok = |nm: &Normalizer, d: usize| {
            nm.mean.len() == d && nm.scale.len() == d && nm.scale.iter().all(|s| *s > 0.0 && s.is_finite())
        };
        if !norm_ok(&input_norm, in_dim) || !norm_ok(&output_norm, n) {
            return Err(DynError::InvalidConfig("normalization statistics have the wrong length or non-positive scales".into()));
        }
        Ok(DynModel {
            n,
            m: in_dim - n,
            net,
            input_norm,
            output_norm,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn input_norm(&self) -> &Normalizer {
        &self.input_norm
    }

    pub fn output_norm(&self) -> &Normalizer {
        &self.output_norm
    }

    fn input(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "dynamics model state dimension");
        assert_eq!(u.len(), self.m, "dynamics model control dimension");
        let mut xu = Vec::with_capacity(self.n + self.m);
        xu.extend_from_slice(x);
        xu.extend_from_slice(u);
        self.input_norm.apply(&xu)
    }

    /// Predicted increment `x' − x`.
    pub fn predict_delta(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let z = self.input(x, u);
        self.output_norm.invert(&self.net.forward(&z).expect("dynamics model input"))
    }

    fn dataset(&self, data: &[&Transition]) -> Result<(), DynError> {
        for (index, t) in data.iter().enumerate() {
            for (what, expected, got) in [
                ("x", self.n, t.x.len()),
                ("u", self.m, t.u.len()),
                ("x_next", self.n, t.x_next.len()),
            ] {
                if expected != got {
                    return Err(DynError::Dimension {
                        index,
                        what,
                        expected,
                        got,
                    });
                }
            }
        }
        Ok(())
    }

    /// Mean squared error of the normalized increment over `data`.
    pub fn loss<T: Borrow<Transition>>(&self, data: &[T]) -> f64 {
        let mut total = 0.0;
        for t in data {
            let t = t.borrow();
            let (z, target) = self.sample(t);
            let y = self.net.forward(&z).expect("dynamics model input");
            total += y.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        total / (data.len() * self.n) as f64
    }

    fn sample(&self, t: &Transition) -> (Vec<f64>, Vec<f64>) {
        let delta: Vec<f64> = t.x_next.iter().zip(&t.x).map(|(a, b)| a - b).collect();
        (self.input(&t.x, &t.u), self.output_norm.apply(&delta))
    }

    /// Loss and gradient over a subset of the dataset.
    fn loss_grad(&self, samples: &[(Vec<f64>, Vec<f64>)], idx: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.net.num_params()];
        let denom = (idx.len() * self.n) as f64;
        let mut loss = 0.0;
        for &i in idx {
            let (z, target) = &samples[i];
            let y = self.net.forward(z).expect("dynamics model input");
            let resid: Vec<f64> = y.iter().zip(target).map(|(a, b)| a - b).collect();
            loss += resid.iter().map(|r| r * r).sum::<f64>();
            self.net
                .accumulate_vjp_params(z, &resid, 2.0 / denom, &mut grad)
                .expect("dynamics model gradient");
        }
        (loss / denom, grad)
    }

    /// Supervised regression of the increment. Returns the loss at the start
    /// of every epoch (full batch) or the mean minibatch loss of every epoch.
    pub fn fit<T: Borrow<Transition>>(&mut self, data: &[T], cfg: &FitConfig) -> Result<Vec<f64>, DynError> {
        if data.is_empty() {
            return Err(DynError::EmptyDataset);
        }
        if !(cfg.lr > 0.0) || cfg.batch_size == Some(0) {
            return Err(DynError::InvalidConfig(format!(
                "lr {} must be positive and batch size non-zero",
                cfg.lr
            )));
        }
        let refs: Vec<&Transition> = data.iter().map(|t| t.borrow()).collect();
        self.dataset(&refs)?;
        if cfg.refresh_stats {
            let inputs: Vec<Vec<f64>> = refs.iter().map(|t| [t.x.as_slice(), t.u.as_slice()].concat()).collect();
            let deltas: Vec<Vec<f64>> = refs
                .iter()
                .map(|t| t.x_next.iter().zip(&t.x).map(|(a, b)| a - b).collect())
                .collect();
            self.input_norm = Normalizer::fit(self.n + self.m, inputs.iter().map(|v| v.as_slice()));
            self.output_norm = Normalizer::fit(self.n, deltas.iter().map(|v| v.as_slice()));
        }
        let samples: Vec<(Vec<f64>, Vec<f64>)> = refs.iter().map(|t| self.sample(t)).collect();
        let mut params = self.net.flatten();
        let mut adam = Adam::new(params.len(), cfg.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let batch = cfg.batch_size.unwrap_or(samples.len()).min(samples.len());
            if cfg.batch_size.is_some() {
                order.shuffle(&mut rng);
            }
            let mut epoch_loss = 0.0;
            let mut chunks = 0;
            for idx in order.chunks(batch) {
                let (loss, grad) = self.loss_grad(&samples, idx);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(DynError::Diverged(epoch));
                }
                match cfg.optimizer {
                    Optimizer::Gd => axpy(-cfg.lr, &grad, &mut params),
                    Optimizer::Adam => adam.step(&mut params, &grad),
                }
                self.net.set_params(&params)?;
                epoch_loss += loss;
                chunks += 1;
            }
            history.push(epoch_loss / chunks as f64);
        }
        Ok(history)
    }
}

impl DynamicsSource for DynModel {
    fn predict(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut next = self.predict_delta(x, u);
        for (a, b) in next.iter_mut().zip(x) {
            *a += b;
        }
        next
    }

    /// Column `c` is one forward-mode pass along input `n + c`, mapped back
    /// through both normalizations.
    fn jac_u(&self, x: &[f64], u: &[f64]) -> Mat {
        let z = self.input(x, u);
        let mut jac = Mat::zeros(self.n, self.m);
        let mut e = vec![0.0; self.n + self.m];
        for c in 0..self.m {
            let j = self.n + c;
            e[j] = 1.0;
            let (_, d) = self.net.jvp(&z, &e).expect("dynamics model input");
            e[j] = 0.0;
            for r in 0..self.n {
                jac.set(r, c, self.output_norm.scale[r] * d[r] / self.input_norm.scale[j]);
            }
        }
        jac
    }
}
