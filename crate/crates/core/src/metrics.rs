//! Recovery quality measures.

use nalgebra::DVector;

use crate::error::{check_len, Error, Result};
use crate::model::SupportVector;

/// `|w_hat - w|^2 / |w|^2`.
pub fn nmse(w_hat: &DVector<f64>, w: &DVector<f64>) -> Result<f64> {
    check_len("w_hat", w.len(), w_hat.len())?;
    let energy = w.norm_squared();
    if energy == 0.0 {
        return Err(Error::Degenerate("NMSE against a zero reference"));
    }
    Ok((w_hat - w).norm_squared() / energy)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

/// F1 score of the active positions; two empty supports score 1.
pub fn support_f1(s_hat: &SupportVector, s: &SupportVector) -> Result<f64> {
    check_len("s_hat", s.len(), s_hat.len())?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&a, &b) in s_hat.as_slice().iter().zip(s.as_slice()) {
        match (a, b) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}
