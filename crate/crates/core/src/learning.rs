//! Closed-form updates of the signal-model parameters.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::SupportVector;

/// Default starting point for `p`, inside the admissible `[0.5, 1]`.
pub const P_INIT: f64 = 0.75;
pub const P01_INIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamEstimate {
    pub p_hat: f64,
    pub p01_hat: f64,
    pub sigma_theta_hat: f64,
    pub sigma_n_hat: f64,
    pub iteration: usize,
}

fn mean_square(y: &DVector<f64>) -> f64 {
    y.norm_squared() / y.len() as f64
}

/// Moment estimator `sqrt(N E[y_j^2] / (M (1 - p)))`, assuming unit-norm
/// columns and negligible noise.
pub fn update_sigma_theta(y: &DVector<f64>, n: usize, m: usize, p_hat: f64) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::domain("N", 0.0));
    }
    if !(1.0 - p_hat >= 1e-6) {
        return Err(Error::domain("p_hat", p_hat));
    }
    Ok(libm::sqrt(n as f64 * mean_square(y) / (m as f64 * (1.0 - p_hat))))
}

/// Fraction of inactive entries, `1 - |s|_0 / M`.
pub fn update_p(s: &SupportVector) -> f64 {
    1.0 - activity_fraction(s)
}

/// `|s|_0 / M`, the literal printed rule; kept for comparison runs.
pub fn activity_fraction(s: &SupportVector) -> f64 {
    s.count_active() as f64 / s.len() as f64
}

/// Observed 1 -> 0 transitions over occupied positions among the first
/// `M - 1` entries. Returns `prev` when no position is occupied.
pub fn update_p01(s: &SupportVector, prev: f64) -> f64 {
    let b = s.as_slice();
    let (mut off, mut occupied) = (0usize, 0usize);
    for pair in b.windows(2) {
        if pair[0] {
            occupied += 1;
            if !pair[1] {
                off += 1;
            }
        }
    }
    if occupied == 0 {
        prev
    } else {
        off as f64 / occupied as f64
    }
}

/// Starting estimates: `p = 0.75`, `p01 = 0.1`, `sigma_n` the sample
/// standard deviation of `y` and `sigma_theta` from the moment estimator.
pub fn init_params(y: &DVector<f64>, n: usize, m: usize) -> Result<ParamEstimate> {
    if n < 2 || y.len() != n {
        return Err(Error::domain("N", n as f64));
    }
    let mean = y.mean();
    let var = (y.norm_squared() - n as f64 * mean * mean) / n as f64;
    Ok(ParamEstimate {
        p_hat: P_INIT,
        p01_hat: P01_INIT,
        sigma_theta_hat: update_sigma_theta(y, n, m, P_INIT)?,
        sigma_n_hat: libm::sqrt(var.max(0.0)),
        iteration: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn sigma_theta_examples() {
        assert_eq!(update_sigma_theta(&DVector::zeros(5), 5, 9, 0.9).unwrap(), 0.0);
        let y = DVector::from_vec(vec![1.0, -1.0, 1.0, -1.0]);
        assert!((update_sigma_theta(&y, 4, 4, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(update_sigma_theta(&y, 4, 4, 1.0).is_err());
        assert!(update_sigma_theta(&y, 4, 4, 1.0 - 1e-7).is_err());
    }

    #[test]
    fn sigma_theta_scale_equivariant() {
        let y = DVector::from_vec(vec![0.3, -1.2, 2.0, 0.7, -0.1]);
        let base = update_sigma_theta(&y, 5, 11, 0.8).unwrap();
        let scaled = update_sigma_theta(&(&y * 4.0), 5, 11, 0.8).unwrap();
        assert_eq!(scaled, 4.0 * base);
    }

    #[test]
    fn p_examples() {
        assert_eq!(update_p(&SupportVector::zeros(7)), 1.0);
        assert_eq!(update_p(&SupportVector::new(vec![true; 7])), 0.0);
        let mut bits = vec![false; 512];
        for b in bits.iter_mut().take(51) {
            *b = true;
        }
        let s = SupportVector::new(bits);
        assert!((update_p(&s) - (1.0 - 51.0 / 512.0)).abs() < 1e-15);
        assert!((activity_fraction(&s) - 51.0 / 512.0).abs() < 1e-15);
    }

    #[test]
    fn p01_examples() {
        let s = SupportVector::new(vec![true, false, true, false]);
        assert_eq!(update_p01(&s, 0.3), 1.0);
        let s = SupportVector::new(vec![true; 4]);
        assert_eq!(update_p01(&s, 0.3), 0.0);
        // only the last entry is active: nothing to count
        let s = SupportVector::new(vec![false, false, true]);
        assert_eq!(update_p01(&s, 0.3), 0.3);
    }

    #[test]
    fn init_examples() {
        let est = init_params(&DVector::zeros(6), 6, 10).unwrap();
        assert_eq!(est.sigma_n_hat, 0.0);
        assert_eq!(est.sigma_theta_hat, 0.0);
        assert_eq!(est.p_hat, 0.75);
        assert_eq!(est.p01_hat, 0.1);
        let est = init_params(&DVector::from_element(6, 2.5), 6, 10).unwrap();
        assert!(est.sigma_n_hat.abs() < 1e-7);
        assert!(init_params(&DVector::zeros(1), 1, 10).is_err());
    }

    #[test]
    fn init_noise_level_of_white_data() {
        // Box-Muller on a fixed LCG stream: standard normal data
        let mut state = 7u64;
        let mut uniform = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        let n = 10_000;
        let mut v = Vec::with_capacity(n);
        while v.len() < n {
            let (u1, u2) = (uniform(), uniform());
            let r = libm::sqrt(-2.0 * libm::log(u1));
            v.push(r * libm::cos(2.0 * core::f64::consts::PI * u2));
        }
        let est = init_params(&DVector::from_vec(v), n, 2 * n).unwrap();
        assert!((est.sigma_n_hat - 1.0).abs() < 0.03);
    }
}
