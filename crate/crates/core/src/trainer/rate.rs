//! Decay-rate diagnostic for the squared policy-gradient norm.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("a slope needs at least two distinct grid points, got {0}")]
    GridTooSmall(usize),
    #[error("grid point {t} exceeds the {len} logged updates")]
    GridExceedsLog { t: usize, len: usize },
    #[error("grid points must be positive")]
    ZeroGridPoint,
    #[error("running minimum at T = {0} is not positive; its logarithm is undefined")]
    NonPositive(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateDiagnostic {
    pub grid: Vec<usize>,
    /// `min_{i ≤ T} ‖∇L2(θ_i)‖²` for each `T` in the grid.
    pub running_min: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
}

/// Running minimum of `grad_sq` over the first `T` updates for each `T`,
/// and the least-squares line through `(ln T, ln running_min)`.
pub fn rate_diagnostic(grad_sq: &[f64], grid: &[usize]) -> Result<RateDiagnostic, RateError> {
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() < 2 {
        return Err(RateError::GridTooSmall(sorted.len()));
    }
    if sorted[0] == 0 {
        return Err(RateError::ZeroGridPoint);
    }
    let last = *sorted.last().unwrap();
    if last > grad_sq.len() {
        return Err(RateError::GridExceedsLog {
            t: last,
            len: grad_sq.len(),
        });
    }
    let mut prefix_min = Vec::with_capacity(last);
    let mut cur = f64::INFINITY;
    for g in &grad_sq[..last] {
        cur = cur.min(*g);
        prefix_min.push(cur);
    }
    let running_min: Vec<f64> = grid.iter().map(|t| prefix_min[t - 1]).collect();
    let mut xs = Vec::with_capacity(grid.len());
    let mut ys = Vec::with_capacity(grid.len());
    for (t, v) in grid.iter().zip(&running_min) {
        if !(*v > 0.0) {
            return Err(RateError::NonPositive(*t));
        }
        xs.push((*t as f64).ln());
        ys.push(v.ln());
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(RateDiagnostic {
        grid: grid.to_vec(),
        running_min,
        slope,
        intercept: my - slope * mx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GRID: [usize; 5] = [100, 300, 1000, 3000, 10000];

    #[test]
    fn planted_inverse_decay() {
        let g: Vec<f64> = (1..=10_000).map(|i| 1.0 / i as f64).collect();
        let d = rate_diagnostic(&g, &GRID).unwrap();
        assert!((d.slope + 1.0).abs() < 1e-6, "{}", d.slope);
        assert!(d.intercept.abs() < 1e-9);
    }

    #[test]
    fn constant_has_zero_slope() {
        let d = rate_diagnostic(&vec![0.3; 10_000], &GRID).unwrap();
        assert!(d.slope.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        let g = vec![1.0; 50];
        assert_eq!(rate_diagnostic(&g, &[10]), Err(RateError::GridTooSmall(1)));
        assert_eq!(rate_diagnostic(&g, &[10, 10]), Err(RateError::GridTooSmall(1)));
        assert_eq!(rate_diagnostic(&g, &[10, 100]), Err(RateError::GridExceedsLog { t: 100, len: 50 }));
        assert_eq!(rate_diagnostic(&g, &[0, 10]), Err(RateError::ZeroGridPoint));
        assert_eq!(rate_diagnostic(&[1.0, 0.0], &[1, 2]), Err(RateError::NonPositive(2)));
    }

    proptest! {
        #[test]
        fn running_min_is_non_increasing(g in proptest::collection::vec(1e-6f64..10.0, 200)) {
            let d = rate_diagnostic(&g, &[1, 5, 20, 50, 100, 200]).unwrap();
            for w in d.running_min.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }
    }
}
