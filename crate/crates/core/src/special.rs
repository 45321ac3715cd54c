//! Gaussian tail function and its inverse.

use crate::error::{Error, Result};

/// Upper-tail probability of the standard normal, `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

/// Solves `Q(x) = prob` by bisection; `Q` is strictly decreasing so the
/// bracket `[-40, 40]` shrinks to below `1e-12` well within the loop bound.
pub fn inverse_q(prob: f64) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) {
        return Err(Error::domain("prob", prob));
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q_function(mid) > prob {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_zero() {
        assert!(inverse_q(0.5).unwrap().abs() < 1e-12);
    }

    #[test]
    fn round_trips() {
        for x in [-3.0, -1.0, 0.3, 1.0, 2.5, 4.0, 6.0] {
            assert!((inverse_q(q_function(x)).unwrap() - x).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn deep_tail() {
        // independent oracle: Newton on the tail integral approximated by
        // trapezoidal quadrature of the density from x to x + 20
        let density = |t: f64| libm::exp(-0.5 * t * t) / libm::sqrt(2.0 * core::f64::consts::PI);
        let tail = |x: f64| {
            let n = 200_000;
            let h = 20.0 / n as f64;
            let mut acc = 0.5 * (density(x) + density(x + 20.0));
            for k in 1..n {
                acc += density(x + k as f64 * h);
            }
            acc * h
        };
        let mut x: f64 = 4.0;
        for _ in 0..30 {
            x += (tail(x) - 1e-6) / density(x);
        }
        assert!((x - 4.7534).abs() < 1e-3);
        assert!((inverse_q(1e-6).unwrap() - x).abs() < 1e-6);
    }

    #[test]
    fn rejects_out_of_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(inverse_q(p).is_err());
        }
    }
}
