//! Steepest ascent on the relaxed support with annealed mixture width.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::relax::{cost_l_s, gradient_l_s, step_size_bound};
use super::{IbaConfig, IbaState, StepBound};
use crate::error::{Error, Result};
use crate::linalg::lambda_max_weighted_gram;

/// Slack below which a drop of the objective counts as a violation.
pub const MONOTONE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MStepReport {
    /// Objective after each ascent step, evaluated at the width used for
    /// that step.
    pub costs: Vec<f64>,
    /// Objective before the first step.
    pub initial_cost: f64,
    pub steps: Vec<f64>,
    /// Steps that lowered the objective by more than [`MONOTONE_SLACK`].
    pub violations: usize,
}

/// Upper end of the step interval from the actual curvature of the data
/// term, `2 / (1/sigma0^2 + lambda_max(D Phi^T Phi D) / sigma_n^2)` with
/// `D = diag(theta_hat)`.
pub fn curvature_step_bound(
    phi: &DMatrix<f64>,
    theta_hat: &DVector<f64>,
    sigma0: f64,
    sigma_n: f64,
) -> f64 {
    let lambda = lambda_max_weighted_gram(phi, theta_hat);
    2.0 / (1.0 / (sigma0 * sigma0) + lambda / (sigma_n * sigma_n))
}

pub(crate) fn step_size(
    config: &IbaConfig,
    state: &IbaState,
    phi: &DMatrix<f64>,
    sigma0: f64,
) -> Result<f64> {
    let m = phi.ncols();
    if !config.mu_auto {
        return Ok(config.mu);
    }
    let sigma_n = state.params.sigma_n;
    let bound = match config.step_bound {
        StepBound::Analytic => {
            step_size_bound(sigma0, sigma_n, state.params.sigma_theta, m)?
        }
        StepBound::Curvature => curvature_step_bound(phi, &state.theta_hat, sigma0, sigma_n),
    };
    Ok(0.5 * bound)
}

/// Runs `config.m_step_iters` ascent steps `s <- s + mu dL/ds` on
/// `state.s_relaxed`, shrinking `sigma0` by `alpha` after each one.
pub fn m_step(
    state: &mut IbaState,
    config: &IbaConfig,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
) -> Result<MStepReport> {
    let markov = state.params.markov;
    let sigma_n = state.params.sigma_n;
    let mut report = MStepReport {
        costs: Vec::with_capacity(config.m_step_iters),
        initial_cost: 0.0,
        steps: Vec::with_capacity(config.m_step_iters),
        violations: 0,
    };
    for it in 0..config.m_step_iters {
        let sigma0 = state.sigma0;
        let mu = step_size(config, state, phi, sigma0)?;
        let before = cost_l_s(&state.s_relaxed, &state.theta_hat, phi, y, &markov, sigma0, sigma_n)?;
        if it == 0 {
            report.initial_cost = before;
        }
        let grad = gradient_l_s(&state.s_relaxed, &state.theta_hat, phi, y, &markov, sigma0, sigma_n)?;
        let next = &state.s_relaxed + grad * mu;
        let after = cost_l_s(&next, &state.theta_hat, phi, y, &markov, sigma0, sigma_n)?;
        if !after.is_finite() || next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("M-step objective (step size too large?)"));
        }
        if after < before - MONOTONE_SLACK {
            report.violations += 1;
        }
        state.s_relaxed = next;
        state.mu = mu;
        state.anneal_sigma0();
        report.costs.push(after);
        report.steps.push(mu);
    }
    state.monotonicity_violations += report.violations;
    Ok(report)
}
