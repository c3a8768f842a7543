//! Discounted discrete-time LQR by fixed-point Riccati iteration.

use thiserror::Error;

use crate::num::{Mat, NumError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqrError {
    #[error("Riccati iteration did not converge in {iterations} iterations (last change {last_change:.3e}, residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        residual: f64,
    },
    #[error("inconsistent LQR dimensions: {0}")]
    Shape(String),
    #[error(transparent)]
    Num(#[from] NumError),
}

#[derive(Clone, Debug)]
pub struct LqrSolution {
    /// Value matrix, `V(x) = xᵀPx`.
    pub p: Mat,
    /// Gain, `u = -Kx`.
    pub k: Mat,
    /// Frobenius norm of the discounted DARE residual.
    pub residual: f64,
    pub iterations: usize,
}

fn check_shapes(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<(), LqrError> {
    let n = a.rows();
    let m = b.cols();
    if a.cols() != n || b.rows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(LqrError::Shape(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    Ok(())
}

/// One application of the discounted Riccati map, returning the new `P` and
/// the gain computed from the input `P`.
pub fn riccati_map(a: &Mat, b: &Mat, q: &Mat, r: &Mat, beta: f64, p: &Mat) -> Result<(Mat, Mat), LqrError> {
    let at = a.transpose();
    let bt = b.transpose();
    let pa = p.matmul(a);
    let pb = p.matmul(b);
    let gram = r.add(&bt.matmul(&pb).scale(beta));
    // K = β (R + βBᵀPB)⁻¹ BᵀPA
    let k = gram.solve(&bt.matmul(&pa))?.scale(beta);
    // Q + βAᵀPA − βAᵀPB·K
    let next = q
        .add(&at.matmul(&pa).scale(beta))
        .sub(&at.matmul(&pb).matmul(&k).scale(beta));
    Ok((next.symmetrize(), k))
}

/// Frobenius norm of `P − riccati_map(P)`.
pub fn dare_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, beta: f64, p: &Mat) -> Result<f64, LqrError> {
    let (next, _) = riccati_map(a, b, q, r, beta, p)?;
    Ok(p.sub(&next).frobenius_norm())
}

/// Iterates `P ← Q + βAᵀPA − β²AᵀPB(R + βBᵀPB)⁻¹BᵀPA` from `P₀ = Q` until the
/// largest entry change drops below `tol`.
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat, beta: f64, tol: f64, max_iter: usize) -> Result<LqrSolution, LqrError> {
    check_shapes(a, b, q, r)?;
    let mut p = q.clone();
    let mut last_change = f64::INFINITY;
    for it in 1..=max_iter {
        let (next, _) = riccati_map(a, b, q, r, beta, &p)?;
        if !next.is_finite() {
            break;
        }
        last_change = next.sub(&p).max_abs();
        p = next;
        if last_change < tol {
            let (_, k) = riccati_map(a, b, q, r, beta, &p)?;
            let residual = dare_residual(a, b, q, r, beta, &p)?;
            return Ok(LqrSolution {
                p,
                k,
                residual,
                iterations: it,
            });
        }
    }
    let residual = dare_residual(a, b, q, r, beta, &p).unwrap_or(f64::INFINITY);
    Err(LqrError::NonConvergence {
        iterations: max_iter,
        last_change,
        residual,
    })
}

/// Spectral radius of `√β (A − BK)`.
pub fn closed_loop_radius(a: &Mat, b: &Mat, k: &Mat, beta: f64) -> f64 {
    a.sub(&b.matmul(k)).scale(beta.sqrt()).spectral_radius()
}

/// Quadratic value of the fixed linear policy `u = -Kx` on `x' = Ax + Bu`
/// with stage cost `xᵀQx + uᵀRu` discounted by `γ`: the fixed point of
/// `P = Q + KᵀRK + γ(A−BK)ᵀP(A−BK)`.
#[allow(clippy::too_many_arguments)]
pub fn policy_value_matrix(
    a: &Mat,
    b: &Mat,
    q: &Mat,
    r: &Mat,
    k: &Mat,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Mat, LqrError> {
    check_shapes(a, b, q, r)?;
    let closed = a.sub(&b.matmul(k));
    let closed_t = closed.transpose();
    let c_eff = q.add(&k.transpose().matmul(r).matmul(k));
    let mut p = c_eff.clone();
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = c_eff
            .add(&closed_t.matmul(&p).matmul(&closed).scale(gamma))
            .symmetrize();
        if !next.is_finite() {
            break;
        }
        last_change = next.sub(&p).max_abs();
        p = next;
        if last_change < tol {
            return Ok(p);
        }
    }
    Err(LqrError::NonConvergence {
        iterations: max_iter,
        last_change,
        residual: last_change,
    })
}
