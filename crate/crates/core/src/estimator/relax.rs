//! Continuous relaxation of the support prior and the M-step objective.
//!
//! Every support coordinate gets a two-component Gaussian mixture centred
//! on 0 and 1 with common width `sigma0`. The first coordinate uses the
//! stationary weights `(p, 1 - p)`; later coordinates use the summed
//! transition weights `q1 = p01 + (1 - p10)` and `q2 = p10 + (1 - p01)`.
//! Mixture terms are kept unnormalized (`exp(-(s - m)^2 / (2 sigma0^2))`),
//! which only shifts the objective by a constant.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::model::{log_sum_exp, MarkovParams};
use crate::special::inverse_q;

/// Mixture weights `(q1, q2)` attached to every transition term.
pub fn transition_weights(markov: &MarkovParams) -> (f64, f64) {
    (
        markov.p01() + (1.0 - markov.p10()),
        markov.p10() + (1.0 - markov.p01()),
    )
}

fn log_weight(w: f64) -> f64 {
    if w > 0.0 {
        libm::log(w)
    } else {
        f64::NEG_INFINITY
    }
}

/// Log of the two-component mixture at `s`.
pub(crate) fn log_mixture(s: f64, w0: f64, w1: f64, sigma0: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma0 * sigma0);
    log_sum_exp(
        log_weight(w0) - s * s * inv,
        log_weight(w1) - (s - 1.0) * (s - 1.0) * inv,
    )
}

/// Responsibility-weighted offset `sum_j r_j (s - m_j)`, i.e. `s - r_1`.
/// The log-domain logistic keeps it finite when both exponentials underflow.
pub(crate) fn mixture_pull(s: f64, w0: f64, w1: f64, sigma0: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma0 * sigma0);
    let l0 = log_weight(w0) - s * s * inv;
    let l1 = log_weight(w1) - (s - 1.0) * (s - 1.0) * inv;
    let r1 = if l1 == f64::NEG_INFINITY {
        0.0
    } else if l0 == f64::NEG_INFINITY {
        1.0
    } else if l1 >= l0 {
        1.0 / (1.0 + libm::exp(l0 - l1))
    } else {
        let e = libm::exp(l1 - l0);
        e / (1.0 + e)
    };
    s - r1
}

/// `g1(s1)`: pull of the first coordinate under the stationary mixture.
pub fn g1(s1: f64, p: f64, sigma0: f64) -> f64 {
    mixture_pull(s1, p, 1.0 - p, sigma0)
}

/// `g2(s)`: pull of a later coordinate under the transition mixture.
pub fn g2(s: f64, p01: f64, p10: f64, sigma0: f64) -> f64 {
    mixture_pull(s, p01 + (1.0 - p10), p10 + (1.0 - p01), sigma0)
}

fn check_dims(
    s: &DVector<f64>,
    theta: &DVector<f64>,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<()> {
    check_len("s", phi.ncols(), s.len())?;
    check_len("theta_hat", phi.ncols(), theta.len())?;
    check_len("y", phi.nrows(), y.len())
}

fn residual(
    s: &DVector<f64>,
    theta: &DVector<f64>,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    y - phi * s.component_mul(theta)
}

/// Relaxed log-prior of the support alone.
pub fn log_prior_relaxed(s: &DVector<f64>, markov: &MarkovParams, sigma0: f64) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    let (q1, q2) = transition_weights(markov);
    let head = log_mixture(s[0], markov.p(), 1.0 - markov.p(), sigma0);
    head + s.iter().skip(1).map(|&v| log_mixture(v, q1, q2, sigma0)).sum::<f64>()
}

/// M-step objective: relaxed support prior minus the data misfit
/// `|y - Phi diag(s) theta_hat|^2 / (2 sigma_n^2)`.
pub fn cost_l_s(
    s: &DVector<f64>,
    theta_hat: &DVector<f64>,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    markov: &MarkovParams,
    sigma0: f64,
    sigma_n: f64,
) -> Result<f64> {
    check_dims(s, theta_hat, phi, y)?;
    check_widths(sigma0, sigma_n)?;
    let misfit = residual(s, theta_hat, phi, y).norm_squared();
    Ok(log_prior_relaxed(s, markov, sigma0) - misfit / (2.0 * sigma_n * sigma_n))
}

/// Exact gradient of [`cost_l_s`] with respect to `s`.
pub fn gradient_l_s(
    s: &DVector<f64>,
    theta_hat: &DVector<f64>,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    markov: &MarkovParams,
    sigma0: f64,
    sigma_n: f64,
) -> Result<DVector<f64>> {
    check_dims(s, theta_hat, phi, y)?;
    check_widths(sigma0, sigma_n)?;
    let (q1, q2) = transition_weights(markov);
    let inv_s0 = 1.0 / (sigma0 * sigma0);
    let inv_sn = 1.0 / (sigma_n * sigma_n);
    let correlation = phi.tr_mul(&residual(s, theta_hat, phi, y));
    Ok(DVector::from_fn(s.len(), |i, _| {
        let pull = if i == 0 {
            g1(s[0], markov.p(), sigma0)
        } else {
            mixture_pull(s[i], q1, q2, sigma0)
        };
        let data = theta_hat[i] * correlation[i];
        // a zero amplitude contributes nothing even when sigma_n is infinite
        let data = if data == 0.0 { 0.0 } else { data * inv_sn };
        -pull * inv_s0 + data
    }))
}

fn check_widths(sigma0: f64, sigma_n: f64) -> Result<()> {
    if !(sigma0 > 0.0) {
        return Err(Error::domain("sigma0", sigma0));
    }
    if !(sigma_n > 0.0) {
        return Err(Error::domain("sigma_n", sigma_n));
    }
    Ok(())
}

/// Largest amplitude expected among `m` Gaussian draws with probability
/// 0.99: `sigma_theta * Q^{-1}((1 - 0.99^{1/m}) / 2)`.
pub fn amplitude_bound(sigma_theta: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::domain("M", 0.0));
    }
    let tail = -libm::expm1(libm::log(0.99) / m as f64) / 2.0;
    Ok(sigma_theta * inverse_q(tail)?)
}

/// Upper end of the admissible step-size interval,
/// `2 / (1/sigma0^2 + M M*^2 / sigma_n^2)`.
pub fn step_size_bound(sigma0: f64, sigma_n: f64, sigma_theta: f64, m: usize) -> Result<f64> {
    if !(sigma0 > 0.0) {
        return Err(Error::domain("sigma0", sigma0));
    }
    if !(sigma_n > 0.0) {
        return Err(Error::domain("sigma_n", sigma_n));
    }
    if !(sigma_theta > 0.0) {
        return Err(Error::domain("sigma_theta", sigma_theta));
    }
    let m_star = amplitude_bound(sigma_theta, m)?;
    let data = m as f64 * m_star * m_star / (sigma_n * sigma_n);
    Ok(2.0 / (1.0 / (sigma0 * sigma0) + data))
}
