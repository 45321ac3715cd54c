//! Brute-force references for small problems.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::{factor_spd, pinv_solve, min_norm_solution};
use crate::model::{MarkovParams, ModelParams, SupportVector};

/// Largest `M` the exhaustive search accepts.
pub const ORACLE_MAX_M: usize = 20;

/// How the support likelihood `p(y | s)` weighs the covariance determinant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Likelihood {
    /// `exp(-y^T C^-1 y / 2) / det C`.
    #[default]
    Printed,
    /// The Gaussian density, `exp(-y^T C^-1 y / 2) / sqrt(det C)`.
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub s_star: SupportVector,
    pub score: f64,
    /// Every support with its score, best first, when requested.
    pub ranking: Option<Vec<(SupportVector, f64)>>,
}

/// Log of the stationary Markov prior of a support pattern.
pub fn log_support_prior(s: &SupportVector, markov: &MarkovParams) -> f64 {
    let on = |prob: f64, active: bool| libm::log(if active { prob } else { 1.0 - prob });
    let b = s.as_slice();
    let Some(&first) = b.first() else {
        return 0.0;
    };
    let mut total = on(1.0 - markov.p(), first);
    for pair in b.windows(2) {
        total += on(markov.prob_on_given(pair[0]), pair[1]);
    }
    total
}

/// `log p(y | s)` up to a constant, with `C = sigma_n^2 I + sigma_theta^2 Phi S Phi^T`.
pub fn log_support_likelihood(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    s: &SupportVector,
    params: &ModelParams,
    likelihood: Likelihood,
) -> Result<f64> {
    let n = phi.nrows();
    let var_n = params.sigma_n * params.sigma_n;
    let var_t = params.sigma_theta * params.sigma_theta;
    let mut cov = DMatrix::from_diagonal_element(n, n, var_n);
    for j in s.active_indices() {
        let col = phi.column(j);
        cov.ger(var_t, &col, &col, 1.0);
    }
    let factor = factor_spd(cov)?;
    let chol = &factor.chol;
    let quad = y.dot(&chol.solve(y));
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>();
    let power = match likelihood {
        Likelihood::Printed => 1.0,
        Likelihood::Gaussian => 0.5,
    };
    Ok(-0.5 * quad - power * logdet)
}

/// Score of one support: log prior plus log likelihood.
pub fn support_score(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    s: &SupportVector,
    params: &ModelParams,
    likelihood: Likelihood,
) -> Result<f64> {
    Ok(log_support_prior(s, &params.markov) + log_support_likelihood(phi, y, s, params, likelihood)?)
}

/// Maximizes the support posterior over all `2^M` patterns. Ties go to the
/// smallest bitmask, so the result does not depend on enumeration order.
pub fn exhaustive_map_support(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &ModelParams,
    likelihood: Likelihood,
    keep_ranking: bool,
) -> Result<OracleResult> {
    check_len("y", phi.nrows(), y.len())?;
    let m = phi.ncols();
    if m > ORACLE_MAX_M {
        return Err(Error::OracleCap {
            m,
            cap: ORACLE_MAX_M,
        });
    }
    if !(params.sigma_n > 0.0) {
        return Err(Error::domain("sigma_n", params.sigma_n));
    }
    let mut best: Option<(u64, f64)> = None;
    let mut ranking = Vec::new();
    for mask in 0..(1u64 << m) {
        let s = SupportVector::from_bitmask(mask, m);
        let score = support_score(phi, y, &s, params, likelihood)?;
        if !score.is_finite() {
            return Err(Error::NonFinite("support score"));
        }
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((mask, score));
        }
        if keep_ranking {
            ranking.push((s, score));
        }
    }
    let (mask, score) = best.ok_or(Error::Degenerate("empty enumeration"))?;
    let ranking = keep_ranking.then(|| {
        // stable sort keeps ascending bitmask order among equal scores
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranking
    });
    Ok(OracleResult {
        s_star: SupportVector::from_bitmask(mask, m),
        score,
        ranking,
    })
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_gradient<F>(mut f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::domain("h", h));
    }
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite("finite-difference evaluation"));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Least-squares fit of `y` on the columns in `s`, zero elsewhere.
pub fn restricted_least_squares(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    s: &SupportVector,
) -> Result<DVector<f64>> {
    check_len("y", phi.nrows(), y.len())?;
    check_len("s", phi.ncols(), s.len())?;
    let idx = s.active_indices();
    let mut w = DVector::zeros(phi.ncols());
    if idx.is_empty() {
        return Ok(w);
    }
    let sub = phi.select_columns(idx.iter());
    let gram = sub.tr_mul(&sub);
    let rhs = sub.tr_mul(y);
    let coef = match Cholesky::new(gram) {
        Some(chol) if idx.len() <= phi.nrows() => {
            let c = chol.solve(&rhs);
            // accept only a well-conditioned solve
            if c.iter().all(|v| v.is_finite())
                && (sub.tr_mul(&(y - &sub * &c))).norm() <= 1e-9 * (1.0 + rhs.norm())
            {
                c
            } else {
                pinv_solve(&sub, y)?
            }
        }
        _ => pinv_solve(&sub, y)?,
    };
    for (k, &j) in idx.iter().enumerate() {
        w[j] = coef[k];
    }
    Ok(w)
}

/// Minimum-norm solution thresholded at `|w0| > th`, then refit by least
/// squares on the kept columns.
pub fn baseline_minnorm_threshold(phi: &DMatrix<f64>, y: &DVector<f64>, th: f64) -> Result<DVector<f64>> {
    check_len("y", phi.nrows(), y.len())?;
    let (w0, _) = min_norm_solution(phi, y)?;
    let s = SupportVector::new(w0.iter().map(|v| v.abs() > th).collect());
    restricted_least_squares(phi, y, &s)
}
