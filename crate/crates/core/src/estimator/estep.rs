//! Amplitude posterior under the Gamma-hyperprior SBL model.
//!
//! With `Psi = Phi diag(scale)` the posterior of `theta` is Gaussian with
//! mean `(Psi^T Psi + sigma_n^2 Sigma_0)^{-1} Psi^T y` and covariance
//! `(sigma_n^{-2} Psi^T Psi + Sigma_0)^{-1}`, `Sigma_0 = diag(gamma)`.
//! Columns with zero scale decouple: their mean is 0 and their variance the
//! prior `1 / gamma_i`. Both solve paths therefore work on the active
//! columns only; the primal path factors a `k x k` system (`k` active
//! columns), the dual path the `N x N` matrix
//! `sigma_n^2 I + Psi Sigma_0^{-1} Psi^T`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::linalg::factor_spd;
use crate::model::SupportVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveForm {
    /// Inverts the (active-set) `M`-side system.
    Primal,
    /// Inverts the `N x N` observation-side system.
    Dual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStats {
    pub mu_theta: DVector<f64>,
    pub sigma_theta_diag: DVector<f64>,
    pub form: SolveForm,
    /// A ridge had to be added to factor the system.
    pub jittered: bool,
}

struct Active {
    idx: Vec<usize>,
    psi: DMatrix<f64>,
}

fn active_columns(phi: &DMatrix<f64>, scale: &DVector<f64>) -> Active {
    let idx: Vec<usize> = (0..scale.len()).filter(|&i| scale[i] != 0.0).collect();
    let mut psi = DMatrix::zeros(phi.nrows(), idx.len());
    for (k, &i) in idx.iter().enumerate() {
        psi.set_column(k, &(phi.column(i) * scale[i]));
    }
    Active { idx, psi }
}

fn validate(
    phi: &DMatrix<f64>,
    scale: &DVector<f64>,
    y: &DVector<f64>,
    sigma_n: f64,
    gamma: &DVector<f64>,
) -> Result<()> {
    check_len("support", phi.ncols(), scale.len())?;
    check_len("gamma", phi.ncols(), gamma.len())?;
    check_len("y", phi.nrows(), y.len())?;
    if !(sigma_n > 0.0) || !sigma_n.is_finite() {
        return Err(Error::domain("sigma_n", sigma_n));
    }
    if let Some(&g) = gamma.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::domain("gamma", g));
    }
    Ok(())
}

fn prior_stats(gamma: &DVector<f64>, form: SolveForm) -> PosteriorStats {
    PosteriorStats {
        mu_theta: DVector::zeros(gamma.len()),
        sigma_theta_diag: gamma.map(|g| 1.0 / g),
        form,
        jittered: false,
    }
}

/// Posterior of `theta` for a binary support, choosing the cheaper solve.
pub fn e_step(
    phi: &DMatrix<f64>,
    support: &SupportVector,
    y: &DVector<f64>,
    sigma_n: f64,
    gamma: &DVector<f64>,
) -> Result<PosteriorStats> {
    e_step_scaled(phi, &support.to_real(), y, sigma_n, gamma)
}

/// As [`e_step`] with `Psi = Phi diag(scale)` for an arbitrary real scale.
pub fn e_step_scaled(
    phi: &DMatrix<f64>,
    scale: &DVector<f64>,
    y: &DVector<f64>,
    sigma_n: f64,
    gamma: &DVector<f64>,
) -> Result<PosteriorStats> {
    validate(phi, scale, y, sigma_n, gamma)?;
    let k = scale.iter().filter(|&&v| v != 0.0).count();
    let any_zero_precision = (0..scale.len()).any(|i| scale[i] != 0.0 && gamma[i] == 0.0);
    if k <= phi.nrows() || any_zero_precision {
        e_step_primal(phi, scale, y, sigma_n, gamma)
    } else {
        e_step_dual(phi, scale, y, sigma_n, gamma)
    }
}

pub fn e_step_primal(
    phi: &DMatrix<f64>,
    scale: &DVector<f64>,
    y: &DVector<f64>,
    sigma_n: f64,
    gamma: &DVector<f64>,
) -> Result<PosteriorStats> {
    validate(phi, scale, y, sigma_n, gamma)?;
    let mut stats = prior_stats(gamma, SolveForm::Primal);
    let active = active_columns(phi, scale);
    if active.idx.is_empty() {
        return Ok(stats);
    }
    let var = sigma_n * sigma_n;
    let mut system = active.psi.tr_mul(&active.psi);
    for (k, &i) in active.idx.iter().enumerate() {
        system[(k, k)] += var * gamma[i];
    }
    let factor = factor_spd(system)?;
    let mean = factor.chol.solve(&active.psi.tr_mul(y));
    let inverse = factor.chol.inverse();
    for (k, &i) in active.idx.iter().enumerate() {
        stats.mu_theta[i] = mean[k];
        stats.sigma_theta_diag[i] = (var * inverse[(k, k)]).max(0.0);
    }
    stats.jittered = factor.jittered;
    Ok(stats)
}

/// Needs `gamma_i > 0` on every active column.
pub fn e_step_dual(
    phi: &DMatrix<f64>,
    scale: &DVector<f64>,
    y: &DVector<f64>,
    sigma_n: f64,
    gamma: &DVector<f64>,
) -> Result<PosteriorStats> {
    validate(phi, scale, y, sigma_n, gamma)?;
    let mut stats = prior_stats(gamma, SolveForm::Dual);
    let active = active_columns(phi, scale);
    if active.idx.is_empty() {
        return Ok(stats);
    }
    let inv_gamma: Vec<f64> = active.idx.iter().map(|&i| 1.0 / gamma[i]).collect();
    if let Some(k) = inv_gamma.iter().position(|v| !v.is_finite()) {
        return Err(Error::domain("gamma", gamma[active.idx[k]]));
    }
    let mut weighted = active.psi.clone();
    for (k, &ig) in inv_gamma.iter().enumerate() {
        weighted.column_mut(k).scale_mut(ig);
    }
    let mut system = &weighted * active.psi.transpose();
    for n in 0..system.nrows() {
        system[(n, n)] += sigma_n * sigma_n;
    }
    let factor = factor_spd(system)?;
    let z = factor.chol.solve(y);
    let mean = weighted.tr_mul(&z);
    let x = factor.chol.solve(&active.psi);
    for (k, &i) in active.idx.iter().enumerate() {
        let quad = active.psi.column(k).dot(&x.column(k));
        stats.mu_theta[i] = mean[k];
        stats.sigma_theta_diag[i] = (inv_gamma[k] - inv_gamma[k] * inv_gamma[k] * quad).max(0.0);
    }
    stats.jittered = factor.jittered;
    Ok(stats)
}

/// Full posterior covariance (`M x M`, zero cross terms for inactive
/// columns).
pub fn posterior_covariance(
    phi: &DMatrix<f64>,
    scale: &DVector<f64>,
    sigma_n: f64,
    gamma: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let y = DVector::zeros(phi.nrows());
    validate(phi, scale, &y, sigma_n, gamma)?;
    let m = phi.ncols();
    let mut cov = DMatrix::from_diagonal(&gamma.map(|g| 1.0 / g));
    let active = active_columns(phi, scale);
    if active.idx.is_empty() {
        return Ok(cov);
    }
    let var = sigma_n * sigma_n;
    let mut system = active.psi.tr_mul(&active.psi);
    for (k, &i) in active.idx.iter().enumerate() {
        system[(k, k)] += var * gamma[i];
    }
    let inverse = factor_spd(system)?.chol.inverse();
    debug_assert_eq!(cov.nrows(), m);
    for (a, &i) in active.idx.iter().enumerate() {
        for (b, &j) in active.idx.iter().enumerate() {
            cov[(i, j)] = var * inverse[(a, b)];
        }
    }
    Ok(cov)
}

/// `gamma_i = (1 + 2a) / (mu_i^2 + Sigma_ii + 2b)`.
pub fn gamma_update(stats: &PosteriorStats, a: f64, b: f64) -> DVector<f64> {
    stats
        .mu_theta
        .zip_map(&stats.sigma_theta_diag, |mu, s| (1.0 + 2.0 * a) / (mu * mu + s + 2.0 * b))
}

/// Noise precision update:
/// `1/beta' = (|y - Psi mu|^2 + beta^{-1} sum_i (1 - gamma_i Sigma_ii) + 2d) / (N + 2c)`.
///
/// `fitted` is `Psi mu_theta`. Inactive columns contribute exactly zero to
/// the sum (their variance is the prior `1 / gamma_i`) and are skipped.
pub fn beta_update(
    y: &DVector<f64>,
    fitted: &DVector<f64>,
    stats: &PosteriorStats,
    active: &[bool],
    gamma_prev: &DVector<f64>,
    beta_prev: f64,
    c: f64,
    d: f64,
) -> Result<f64> {
    check_len("fitted", y.len(), fitted.len())?;
    check_len("gamma", stats.mu_theta.len(), gamma_prev.len())?;
    check_len("support", stats.mu_theta.len(), active.len())?;
    if !(beta_prev > 0.0) {
        return Err(Error::domain("beta", beta_prev));
    }
    let misfit = (y - fitted).norm_squared();
    let shrink: f64 = (0..active.len())
        .filter(|&i| active[i])
        .map(|i| 1.0 - gamma_prev[i] * stats.sigma_theta_diag[i])
        .sum();
    let inv_beta = (misfit + shrink / beta_prev + 2.0 * d) / (y.len() as f64 + 2.0 * c);
    Ok(1.0 / inv_beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lcg_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed;
        DMatrix::from_fn(n, m, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn empty_support_gives_zero_mean() {
        let phi = lcg_matrix(4, 6, 1);
        let y = DVector::from_element(4, 1.0);
        let gamma = DVector::from_element(6, 2.0);
        let stats = e_step(&phi, &SupportVector::zeros(6), &y, 0.1, &gamma).unwrap();
        assert!(stats.mu_theta.iter().all(|&v| v == 0.0));
        assert!(stats.sigma_theta_diag.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn orthonormal_square_zero_precision() {
        // rotation matrix: orthonormal rows and columns
        let (c, s) = (libm::cos(0.3), libm::sin(0.3));
        let phi = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let y = DVector::from_vec(vec![0.4, -1.3]);
        let gamma = DVector::zeros(2);
        let stats = e_step(&phi, &SupportVector::new(vec![true, true]), &y, 1e-8, &gamma).unwrap();
        let expected = phi.transpose() * &y;
        assert!((stats.mu_theta - expected).norm() < 1e-12);
        assert_eq!(stats.form, SolveForm::Primal);
    }

    #[test]
    fn dual_form_needs_positive_precision() {
        let phi = lcg_matrix(3, 5, 2);
        let y = DVector::from_element(3, 1.0);
        let mut gamma = DVector::from_element(5, 1.0);
        gamma[1] = 0.0;
        let scale = DVector::from_element(5, 1.0);
        assert!(e_step_dual(&phi, &scale, &y, 0.1, &gamma).is_err());
        // dispatcher falls back to the primal path
        let stats = e_step_scaled(&phi, &scale, &y, 0.1, &gamma).unwrap();
        assert_eq!(stats.form, SolveForm::Primal);
    }

    #[test]
    fn forms_agree_and_solve_normal_equations() {
        for seed in 0..10 {
            let phi = lcg_matrix(6, 12, 100 + seed);
            let y = lcg_matrix(6, 1, 200 + seed).column(0).into_owned();
            let gamma = DVector::from_element(12, 1.0);
            let scale = DVector::from_fn(12, |i, _| if (i + seed as usize).is_multiple_of(3) { 0.0 } else { 1.0 });
            let sigma_n = 0.1;
            let primal = e_step_primal(&phi, &scale, &y, sigma_n, &gamma).unwrap();
            let dual = e_step_dual(&phi, &scale, &y, sigma_n, &gamma).unwrap();
            let rel = (&primal.mu_theta - &dual.mu_theta).norm() / primal.mu_theta.norm();
            assert!(rel < 1e-8);
            let srel = (&primal.sigma_theta_diag - &dual.sigma_theta_diag).norm()
                / primal.sigma_theta_diag.norm();
            assert!(srel < 1e-8);

            // dense oracle: the full M x M system with zeroed columns
            let psi = &phi * DMatrix::from_diagonal(&scale);
            let mut full = psi.transpose() * &psi;
            for i in 0..12 {
                full[(i, i)] += sigma_n * sigma_n * gamma[i];
            }
            let resid = &full * &primal.mu_theta - psi.transpose() * &y;
            assert!(resid.norm() < 1e-8);
            let lu = full.clone().lu().solve(&(psi.transpose() * &y)).unwrap();
            assert!((lu - &primal.mu_theta).norm() < 1e-8);
        }
    }

    #[test]
    fn covariance_diagonal_matches_stats() {
        let phi = lcg_matrix(5, 7, 9);
        let y = lcg_matrix(5, 1, 10).column(0).into_owned();
        let gamma = DVector::from_fn(7, |i, _| 0.5 + i as f64);
        let scale = DVector::from_vec(vec![1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let stats = e_step_scaled(&phi, &scale, &y, 0.2, &gamma).unwrap();
        let cov = posterior_covariance(&phi, &scale, 0.2, &gamma).unwrap();
        for i in 0..7 {
            assert!((cov[(i, i)] - stats.sigma_theta_diag[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_update_examples() {
        let stats = PosteriorStats {
            mu_theta: DVector::from_vec(vec![0.0, 1.0]),
            sigma_theta_diag: DVector::from_vec(vec![0.0, 0.0]),
            form: SolveForm::Primal,
            jittered: false,
        };
        let g = gamma_update(&stats, 1e-4, 1e-4);
        assert!((g[0] - 5001.0).abs() < 1e-9);
        let g = gamma_update(&stats, 1e-300, 1e-300);
        assert!((g[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_update_matches_scalar_formula() {
        let mu = lcg_matrix(20, 1, 3).column(0).into_owned();
        let sig = lcg_matrix(20, 1, 4).column(0).map(|v| v.abs());
        let stats = PosteriorStats {
            mu_theta: mu.clone(),
            sigma_theta_diag: sig.clone(),
            form: SolveForm::Dual,
            jittered: false,
        };
        let (a, b) = (0.3, 0.02);
        let g = gamma_update(&stats, a, b);
        for i in 0..20 {
            let expected = (1.0 + 2.0 * a) / (mu[i] * mu[i] + sig[i] + 2.0 * b);
            assert!((g[i] - expected).abs() <= 1e-14 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn beta_update_examples() {
        let n = 100;
        let mut y = DVector::zeros(n);
        y[0] = 1.0;
        let fitted = DVector::zeros(n);
        let stats = PosteriorStats {
            mu_theta: DVector::zeros(3),
            sigma_theta_diag: DVector::from_element(3, 1.0),
            form: SolveForm::Primal,
            jittered: false,
        };
        let gamma = DVector::from_element(3, 1.0);
        let active = [false, false, false];
        let beta = beta_update(&y, &fitted, &stats, &active, &gamma, 1.0, 1e-4, 1e-4).unwrap();
        assert!((1.0 / beta - 1.0002 / 100.0002).abs() < 1e-15);

        // perfect fit and vanishing d: the noise variance collapses
        let beta = beta_update(&fitted, &fitted, &stats, &active, &gamma, 1.0, 1e-4, 1e-300)
            .unwrap();
        assert!(beta > 1e290);
    }

    #[test]
    fn beta_update_matches_scalar_formula() {
        let y = lcg_matrix(8, 1, 5).column(0).into_owned();
        let fitted = lcg_matrix(8, 1, 6).column(0).into_owned();
        let mu = lcg_matrix(4, 1, 7).column(0).into_owned();
        let sig = DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let gamma = DVector::from_vec(vec![2.0, 1.5, 3.0, 0.25]);
        let active = [true, true, false, true];
        let stats = PosteriorStats {
            mu_theta: mu,
            sigma_theta_diag: sig.clone(),
            form: SolveForm::Primal,
            jittered: false,
        };
        let (beta_prev, c, d) = (4.0, 0.01, 0.02);
        let beta = beta_update(&y, &fitted, &stats, &active, &gamma, beta_prev, c, d).unwrap();
        let mut misfit = 0.0;
        for n in 0..8 {
            misfit += (y[n] - fitted[n]) * (y[n] - fitted[n]);
        }
        let shrink = (1.0 - 2.0 * 0.1) + (1.0 - 1.5 * 0.2) + (1.0 - 0.25 * 0.4);
        let expected = (8.0 + 2.0 * c) / (misfit + shrink / beta_prev + 2.0 * d);
        assert!((beta - expected).abs() < 1e-14 * expected);
    }
}
