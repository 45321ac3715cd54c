//! The Block-IBA estimator.
//!
//! One outer iteration:
//!
//! 1. binarize the relaxed support with the current threshold,
//! 2. E-step: amplitude posterior on that support, then the `gamma` (and,
//!    unless the noise level is known, `beta`) hyperparameter updates,
//! 3. M-step: a few steepest-ascent steps on the relaxed support with the
//!    mixture width shrinking by `alpha` after each step,
//! 4. threshold decay by `alpha` and closed-form updates of `p`, `p01` and
//!    `sigma_theta` from the new binary support.
//!
//! The loop stops once `|w_k - w_{k-1}| / |w_k|` falls below the tolerance.

mod estep;
mod mstep;
mod relax;

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::learning::{update_p, update_p01, update_sigma_theta, activity_fraction};
use crate::linalg::min_norm_solution;
use crate::model::{bg_log_pdf, HyperState, MarkovParams, ModelParams, SupportVector};

pub use estep::{
    beta_update, e_step, e_step_dual, e_step_primal, e_step_scaled, gamma_update,
    posterior_covariance, PosteriorStats, SolveForm,
};
pub use mstep::{curvature_step_bound, m_step, MStepReport, MONOTONE_SLACK};
pub use relax::{
    amplitude_bound, cost_l_s, g1, g2, gradient_l_s, log_prior_relaxed, step_size_bound,
    transition_weights,
};

/// Which upper bound the automatic step size is half of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepBound {
    /// Closed-form bound from the amplitude scale `sigma_theta` and `M`.
    Analytic,
    /// Bound from the largest eigenvalue of the amplitude-weighted Gram
    /// matrix of the current iterate.
    Curvature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbaConfig {
    /// Fixed step size, used when `mu_auto` is off.
    pub mu: f64,
    /// Decay factor shared by `sigma0` and the threshold.
    pub alpha: f64,
    pub sigma0_init: f64,
    pub th_init: f64,
    pub m_step_iters: usize,
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    /// Keep `sigma_n` at the supplied value instead of learning `beta`.
    pub noise_known: bool,
    /// Derive the step size as half of the selected bound every step.
    pub mu_auto: bool,
    pub step_bound: StepBound,
    /// Scale the E-step columns by the relaxed support instead of 0/1.
    pub use_relaxed_s_in_estep: bool,
    /// Use `p = |s|_0 / M` instead of the inactive fraction.
    pub printed_p_update: bool,
    /// Precision above which an amplitude is pruned to zero.
    pub prune_gamma: f64,
}

impl Default for IbaConfig {
    fn default() -> Self {
        Self {
            mu: 1e-6,
            alpha: 0.98,
            sigma0_init: 1.0,
            th_init: 0.5,
            m_step_iters: 5,
            outer_tol: 1e-3,
            max_outer_iters: 200,
            noise_known: false,
            mu_auto: true,
            step_bound: StepBound::Curvature,
            use_relaxed_s_in_estep: false,
            printed_p_update: false,
            prune_gamma: 1e5,
        }
    }
}

impl IbaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::domain("mu", self.mu));
        }
        if !(self.alpha >= 0.6 && self.alpha < 1.0) {
            return Err(Error::domain("alpha", self.alpha));
        }
        if !(self.sigma0_init > 0.0) {
            return Err(Error::domain("sigma0_init", self.sigma0_init));
        }
        if !(self.th_init > 0.0 && self.th_init < 1.0) {
            return Err(Error::domain("th_init", self.th_init));
        }
        if self.m_step_iters == 0 {
            return Err(Error::domain("m_step_iters", 0.0));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::domain("outer_tol", self.outer_tol));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::domain("max_outer_iters", 0.0));
        }
        if !(self.prune_gamma > 0.0) {
            return Err(Error::domain("prune_gamma", self.prune_gamma));
        }
        Ok(())
    }
}

/// One row of the per-outer-iteration log.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub outer_iter: usize,
    /// M-step objective after the last inner step.
    pub l_s: f64,
    /// Log posterior of the current signal estimate.
    pub l_w: f64,
    pub nmse: Option<f64>,
    pub p_hat: f64,
    pub p01_hat: f64,
    pub sigma_theta_hat: f64,
    pub sigma_n_hat: f64,
    pub sigma0: f64,
    pub th: f64,
    pub mu: f64,
    pub support_size: usize,
    pub m_step_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbaState {
    pub s_relaxed: DVector<f64>,
    pub s_binary: SupportVector,
    /// Amplitudes fed to the M-step.
    pub theta_hat: DVector<f64>,
    pub sigma0: f64,
    pub th: f64,
    pub hyper: HyperState,
    pub params: ModelParams,
    pub mu: f64,
    pub trace: Vec<TraceRow>,
    pub outer_iters: usize,
    pub converged: bool,
    pub jitter_events: usize,
    pub monotonicity_violations: usize,
    pub renormalized_columns: bool,
    pub rank_deficient_init: bool,
    sigma0_init: f64,
    th_init: f64,
    alpha: f64,
    anneal_steps: u32,
    threshold_steps: u32,
}

impl IbaState {
    /// Starting state from the thresholded minimum-norm solution.
    pub fn initialize(
        phi: &DMatrix<f64>,
        y: &DVector<f64>,
        config: &IbaConfig,
        init: &ModelParams,
    ) -> Result<Self> {
        config.validate()?;
        let start = init_solution(phi, y, config.th_init)?;
        let sigma_n = noise_floor(init.sigma_n, y);
        let params = ModelParams::new(init.markov, init.sigma_theta, sigma_n)?;
        Ok(Self {
            s_relaxed: start.s0.to_real(),
            s_binary: start.s0,
            theta_hat: start.theta0,
            sigma0: config.sigma0_init,
            th: config.th_init,
            hyper: HyperState::new(phi.ncols(), 1.0 / (sigma_n * sigma_n))?,
            params,
            mu: config.mu,
            trace: Vec::new(),
            outer_iters: 0,
            converged: false,
            jitter_events: 0,
            monotonicity_violations: 0,
            renormalized_columns: false,
            rank_deficient_init: start.rank_deficient,
            sigma0_init: config.sigma0_init,
            th_init: config.th_init,
            alpha: config.alpha,
            anneal_steps: 0,
            threshold_steps: 0,
        })
    }

    pub(crate) fn anneal_sigma0(&mut self) {
        self.anneal_steps += 1;
        self.sigma0 = self.sigma0_init * libm::pow(self.alpha, f64::from(self.anneal_steps));
    }

    pub(crate) fn decay_threshold(&mut self) {
        self.threshold_steps += 1;
        self.th = self.th_init * libm::pow(self.alpha, f64::from(self.threshold_steps));
    }

    /// Number of `alpha` factors applied to `sigma0` so far.
    pub fn anneal_steps(&self) -> u32 {
        self.anneal_steps
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSolution {
    pub w0: DVector<f64>,
    pub s0: SupportVector,
    pub theta0: DVector<f64>,
    pub rank_deficient: bool,
}

/// Minimum-norm solution `Phi^T (Phi Phi^T)^{-1} y`, its support
/// `|w0| > th` and the amplitudes masked to that support.
pub fn init_solution(phi: &DMatrix<f64>, y: &DVector<f64>, th: f64) -> Result<InitialSolution> {
    check_len("y", phi.nrows(), y.len())?;
    let (w0, rank_deficient) = min_norm_solution(phi, y)?;
    let s0 = SupportVector::new(w0.iter().map(|v| v.abs() > th).collect());
    let theta0 = DVector::from_fn(w0.len(), |i, _| if s0.get(i) { w0[i] } else { 0.0 });
    Ok(InitialSolution {
        w0,
        s0,
        theta0,
        rank_deficient,
    })
}

/// `s_i = 1` iff `relaxed_i > th`.
pub fn binarize(relaxed: &DVector<f64>, th: f64) -> SupportVector {
    SupportVector::from_relaxed(relaxed, th)
}

/// `sum_i log p(w_i) - |y - Phi w|^2 / (2 sigma_n^2)` with the smoothed
/// Bernoulli-Gaussian density.
pub fn log_posterior_w(
    w: &DVector<f64>,
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    p: f64,
    sigma_theta: f64,
    sigma_n: f64,
    sigma_1: f64,
) -> Result<f64> {
    check_len("w", phi.ncols(), w.len())?;
    check_len("y", phi.nrows(), y.len())?;
    if !(sigma_n > 0.0) {
        return Err(Error::domain("sigma_n", sigma_n));
    }
    let mut prior = 0.0;
    for &v in w.iter() {
        prior += bg_log_pdf(v, p, sigma_theta, sigma_1)?;
    }
    let misfit = (y - phi * w).norm_squared();
    let data = if misfit == 0.0 {
        0.0
    } else {
        misfit / (2.0 * sigma_n * sigma_n)
    };
    Ok(prior - data)
}

/// Width of the narrow component of the smoothed source density.
pub fn default_sigma_1(sigma_theta: f64) -> f64 {
    0.005 * sigma_theta
}

fn noise_floor(sigma_n: f64, y: &DVector<f64>) -> f64 {
    let rms = if y.is_empty() {
        0.0
    } else {
        libm::sqrt(y.norm_squared() / y.len() as f64)
    };
    let floor = (1e-6 * rms).max(1e-12);
    if sigma_n > floor {
        sigma_n
    } else if rms > 0.0 {
        floor
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbaOutcome {
    pub w_hat: DVector<f64>,
    pub state: IbaState,
}

impl IbaOutcome {
    /// Support of the returned estimate.
    pub fn support(&self) -> SupportVector {
        SupportVector::new(self.w_hat.iter().map(|&v| v != 0.0).collect())
    }
}

fn unit_columns(phi: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let off = (0..phi.ncols()).any(|j| (phi.column(j).norm() - 1.0).abs() > 1e-10);
    if !off {
        return None;
    }
    let mut fixed = phi.clone();
    for j in 0..fixed.ncols() {
        let norm = fixed.column(j).norm();
        if norm > 0.0 {
            fixed.column_mut(j).unscale_mut(norm);
        }
    }
    Some(fixed)
}

/// Amplitudes driving the M-step. Active entries take their posterior mean.
/// An inactive entry takes the posterior mean it would have if it alone
/// were switched on against the current residual,
/// `phi_i^T r / (|phi_i|^2 + sigma_n^2 gamma_i)`, so the data term can
/// raise its support value. Pruned entries are zero.
pub fn m_step_amplitudes(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    scale: &DVector<f64>,
    stats: &PosteriorStats,
    gamma: &DVector<f64>,
    sigma_n: f64,
    prune_gamma: f64,
) -> DVector<f64> {
    let fitted = phi * scale.component_mul(&stats.mu_theta);
    let correlation = phi.tr_mul(&(y - fitted));
    let var = sigma_n * sigma_n;
    DVector::from_fn(scale.len(), |i, _| {
        if gamma[i] > prune_gamma {
            0.0
        } else if scale[i] != 0.0 {
            stats.mu_theta[i]
        } else {
            let energy = phi.column(i).norm_squared();
            let denom = energy + var * gamma[i];
            if denom > 0.0 {
                correlation[i] / denom
            } else {
                0.0
            }
        }
    })
}

fn relative_change(current: &DVector<f64>, previous: &DVector<f64>) -> f64 {
    let diff = (current - previous).norm();
    let norm = current.norm();
    if diff == 0.0 {
        0.0
    } else if norm == 0.0 {
        f64::INFINITY
    } else {
        diff / norm
    }
}

fn nmse_against(w_hat: &DVector<f64>, truth: &DVector<f64>) -> Option<f64> {
    let energy = truth.norm_squared();
    (energy > 0.0).then(|| (w_hat - truth).norm_squared() / energy)
}

/// Runs Block-IBA from the parameter guess `init`. When `noise_known` is
/// set, `init.sigma_n` is used throughout. `truth`, when given, only feeds
/// the NMSE column of the trace.
pub fn run_block_iba(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &IbaConfig,
    init: &ModelParams,
    truth: Option<&DVector<f64>>,
) -> Result<IbaOutcome> {
    check_len("y", phi.nrows(), y.len())?;
    if let Some(t) = truth {
        check_len("truth", phi.ncols(), t.len())?;
    }
    let renormalized = unit_columns(phi);
    let phi = renormalized.as_ref().unwrap_or(phi);
    let n = phi.nrows();
    let m = phi.ncols();

    let mut state = IbaState::initialize(phi, y, config, init)?;
    state.renormalized_columns = renormalized.is_some();
    let mut w_prev = state.theta_hat.clone();
    let mut best: Option<(f64, DVector<f64>)> = None;

    for k in 1..=config.max_outer_iters {
        // E-step on the current binary support
        let scale = if config.use_relaxed_s_in_estep {
            DVector::from_fn(m, |i, _| {
                if state.s_binary.get(i) {
                    state.s_relaxed[i]
                } else {
                    0.0
                }
            })
        } else {
            state.s_binary.to_real()
        };
        let sigma_n = state.params.sigma_n;
        let stats = e_step_scaled(phi, &scale, y, sigma_n, &state.hyper.gamma)?;
        if stats.jittered {
            state.jitter_events += 1;
        }
        let gamma_prev = state.hyper.gamma.clone();
        state.hyper.gamma = gamma_update(&stats, state.hyper.a, state.hyper.b);
        if !config.noise_known {
            let fitted = phi * scale.component_mul(&stats.mu_theta);
            let active: Vec<bool> = scale.iter().map(|&v| v != 0.0).collect();
            let beta = beta_update(
                y,
                &fitted,
                &stats,
                &active,
                &gamma_prev,
                state.hyper.beta,
                state.hyper.c,
                state.hyper.d,
            )?;
            state.hyper.beta = beta;
            state.params.sigma_n = noise_floor(1.0 / libm::sqrt(beta), y);
        }
        for i in 0..m {
            if state.hyper.gamma[i] > config.prune_gamma && state.s_binary.get(i) {
                state.s_binary.set(i, false);
                state.s_relaxed[i] = 0.0;
            }
        }
        state.theta_hat = m_step_amplitudes(
            phi,
            y,
            &scale,
            &stats,
            &state.hyper.gamma,
            state.params.sigma_n,
            config.prune_gamma,
        );

        // M-step
        let s_before = state.s_relaxed.clone();
        let report = m_step(&mut state, config, phi, y)?;

        // parameter estimation
        state.decay_threshold();
        state.s_binary = binarize(&state.s_relaxed, state.th);
        let p = if config.printed_p_update {
            activity_fraction(&state.s_binary)
        } else {
            update_p(&state.s_binary)
        };
        let p01 = update_p01(&state.s_binary, state.params.markov.p01());
        let markov = MarkovParams::clamped(p, p01);
        let sigma_theta = update_sigma_theta(y, n, m, markov.p())
            .map(|v| v.max(1e-12))
            .unwrap_or(state.params.sigma_theta);
        state.params = ModelParams::new(markov, sigma_theta, state.params.sigma_n)?;

        let w_k = DVector::from_fn(m, |i, _| {
            if state.s_binary.get(i) {
                let s = if config.use_relaxed_s_in_estep {
                    state.s_relaxed[i]
                } else {
                    1.0
                };
                s * state.theta_hat[i]
            } else {
                0.0
            }
        });
        let l_w = log_posterior_w(
            &w_k,
            phi,
            y,
            markov.p(),
            sigma_theta,
            state.params.sigma_n,
            default_sigma_1(sigma_theta),
        )?;
        state.outer_iters = k;
        state.trace.push(TraceRow {
            outer_iter: k,
            l_s: report.costs.last().copied().unwrap_or(report.initial_cost),
            l_w,
            nmse: truth.and_then(|t| nmse_against(&w_k, t)),
            p_hat: markov.p(),
            p01_hat: markov.p01(),
            sigma_theta_hat: sigma_theta,
            sigma_n_hat: state.params.sigma_n,
            sigma0: state.sigma0,
            th: state.th,
            mu: state.mu,
            support_size: state.s_binary.count_active(),
            m_step_costs: report.costs,
        });

        let change = relative_change(&w_k, &w_prev);
        // a relaxed entry still drifting under a live amplitude can flip the
        // support later even though w_k has not moved yet
        let drift = (0..m)
            .filter(|&i| state.theta_hat[i] != 0.0)
            .map(|i| (state.s_relaxed[i] - s_before[i]).abs())
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(score, _)| l_w > *score) {
            best = Some((l_w, w_k.clone()));
        }
        if change < config.outer_tol && drift < config.outer_tol {
            state.converged = true;
            return Ok(IbaOutcome { w_hat: w_k, state });
        }
        w_prev = w_k;
    }
    let w_hat = best.map(|(_, w)| w).unwrap_or(w_prev);
    Ok(IbaOutcome { w_hat, state })
}
