//! Central finite-difference gradient oracle.

use super::NumError;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Outcome of comparing an analytic gradient against central differences.
///
/// `max_rel_error` is the largest componentwise absolute error divided by the
/// infinity norm of the larger of the two gradients, so components that are
/// tiny relative to the rest of the gradient do not dominate the report.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub argmax_index: usize,
    pub numeric: Vec<f64>,
}

impl GradReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error < rel_tol
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn central_difference<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let fp = f(&probe);
            probe[i] = orig - step;
            let fm = f(&probe);
            probe[i] = orig;
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

pub fn finite_diff_check<F>(f: F, x: &[f64], analytic: &[f64], step: f64) -> Result<GradReport, NumError>
where
    F: Fn(&[f64]) -> f64,
{
    if !(step > 0.0) {
        return Err(NumError::InvalidStep(step));
    }
    if analytic.len() != x.len() {
        return Err(NumError::DimensionMismatch {
            context: "finite_diff_check analytic gradient",
            expected: x.len(),
            got: analytic.len(),
        });
    }
    let numeric = central_difference(&f, x, step);
    if let Some(i) = numeric.iter().position(|v| !v.is_finite()) {
        return Err(NumError::NonFinite {
            context: "finite_diff_check objective",
            index: i,
        });
    }
    if let Some(i) = analytic.iter().position(|v| !v.is_finite()) {
        return Err(NumError::NonFinite {
            context: "finite_diff_check analytic gradient",
            index: i,
        });
    }
    let scale = analytic
        .iter()
        .chain(&numeric)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let mut max_abs_error = 0.0;
    let mut argmax_index = 0;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let e = (a - n).abs();
        if e > max_abs_error {
            max_abs_error = e;
            argmax_index = i;
        }
    }
    let max_rel_error = if scale > 0.0 { max_abs_error / scale } else { 0.0 };
    Ok(GradReport {
        max_abs_error,
        max_rel_error,
        argmax_index,
        numeric,
    })
}
