use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTER: f64 = 1e-12;

/// Cholesky factor of a symmetric positive (semi)definite matrix. When the
/// plain factorization fails a `1e-12 * trace / n` ridge is added once and
/// `jittered` records that it happened.
pub(crate) struct SpdFactor {
    pub chol: Cholesky<f64, Dyn>,
    pub jittered: bool,
}

pub(crate) fn factor_spd(a: DMatrix<f64>) -> Result<SpdFactor> {
    let n = a.nrows();
    let scale = a.trace().abs() / n.max(1) as f64;
    if let Some(chol) = Cholesky::new(a.clone()) {
        return Ok(SpdFactor {
            chol,
            jittered: false,
        });
    }
    let ridge = JITTER * if scale > 0.0 { scale } else { 1.0 };
    let mut b = a;
    for i in 0..n {
        b[(i, i)] += ridge;
    }
    Cholesky::new(b)
        .map(|chol| SpdFactor {
            chol,
            jittered: true,
        })
        .ok_or(Error::Singular("matrix is not positive definite"))
}

/// Moore-Penrose pseudo-inverse solve.
pub(crate) fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let tol = svd.singular_values.max() * (a.nrows().max(a.ncols()) as f64) * f64::EPSILON;
    svd.solve(b, tol)
        .map_err(|_| Error::Singular("pseudo-inverse solve failed"))
}

/// `Phi^T (Phi Phi^T)^{-1} y`, falling back to the pseudo-inverse when the
/// Gram matrix is rank deficient. The flag reports the fallback.
pub(crate) fn min_norm_solution(phi: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    let gram = phi * phi.transpose();
    if let Some(chol) = Cholesky::new(gram) {
        let z = chol.solve(y);
        let w = phi.tr_mul(&z);
        // Cholesky of a nearly singular Gram can succeed with garbage
        if w.iter().all(|v| v.is_finite()) && (phi * &w - y).norm() <= 1e-8 * (1.0 + y.norm()) {
            return Ok((w, false));
        }
    }
    Ok((pinv_solve(phi, y)?, true))
}

/// Largest eigenvalue of `D Phi^T Phi D` with `D = diag(d)`, by power
/// iteration on `Phi D`. Returns an upper estimate (scaled by a small margin).
pub(crate) fn lambda_max_weighted_gram(phi: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    let m = phi.ncols();
    if m == 0 || d.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut v = DVector::from_fn(m, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    let mut lambda = 0.0;
    for _ in 0..100 {
        let dv = v.component_mul(d);
        let u = phi * dv;
        let next = phi.tr_mul(&u).component_mul(d);
        let norm = next.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let est = norm / v.norm();
        v = next / norm;
        if (est - lambda).abs() <= 1e-6 * est {
            lambda = est;
            break;
        }
        lambda = est;
    }
    lambda * 1.05
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_rescues_semidefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = factor_spd(a).unwrap();
        assert!(f.jittered);
    }

    #[test]
    fn power_iteration_matches_eigen() {
        let phi = DMatrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let d = DVector::from_fn(6, |i, _| 0.5 + i as f64 * 0.3);
        let dm = DMatrix::from_diagonal(&d);
        let h = &dm * phi.transpose() * &phi * &dm;
        let exact = h.symmetric_eigen().eigenvalues.max();
        let est = lambda_max_weighted_gram(&phi, &d);
        assert!(est >= exact * (1.0 - 1e-4) && est <= exact * 1.06);
    }
}
