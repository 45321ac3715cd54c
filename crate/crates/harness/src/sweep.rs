//! Monte-Carlo trials and parameter sweeps.

use std::time::Instant;

use block_iba::learning::init_params;
use block_iba::metrics::{nmse, support_f1};
use block_iba::model::{sample_measurement_matrix, sample_signal, synthesize_measurements};
use block_iba::oracle::baseline_minnorm_threshold;
use block_iba::{
    run_block_iba, DVector, IbaConfig, IbaOutcome, MarkovParams, MeasurementSet, ModelParams,
    SignalInstance,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SweepKind};
use crate::HarnessError;

/// Draws before giving up on a signal with no active entry.
const MAX_REDRAWS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub kind: String,
    pub sweep_value: f64,
    pub trial: usize,
    pub nmse: f64,
    pub support_f1: f64,
    pub runtime_ms: Option<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    pub p_hat: f64,
    pub p01_hat: f64,
    pub sigma_theta_hat: f64,
    pub sigma_n_hat: f64,
    /// NMSE of the thresholded minimum-norm baseline on the same data.
    pub baseline_nmse: f64,
}

/// Generator of trial `trial` at sweep position `sweep_idx`: the master
/// seed selects the key, the pair selects the stream.
pub fn trial_rng(seed: u64, sweep_idx: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sweep_idx as u64) << 32) | trial as u64);
    rng
}

/// Ground truth and measurements of one trial. Signals without any active
/// entry are redrawn, since NMSE is undefined for them.
pub fn synthesize(
    cfg: &ExperimentConfig,
    params: ModelParams,
    snr_db: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(SignalInstance, MeasurementSet), HarnessError> {
    let mut signal = None;
    for _ in 0..MAX_REDRAWS {
        let s = sample_signal(cfg.m, params, rng)?;
        if s.w.iter().any(|&v| v != 0.0) {
            signal = Some(s);
            break;
        }
    }
    let signal = signal.ok_or_else(|| {
        HarnessError::Input(format!("no active entry in {MAX_REDRAWS} draws (p = {})", params.markov.p()))
    })?;
    let phi = sample_measurement_matrix(cfg.n, cfg.m, rng)?;
    let meas = synthesize_measurements(phi, &signal.w, snr_db, rng)?;
    Ok((signal, meas))
}

/// Parameter guess handed to the estimator: the standard starting point
/// computed from `y`, with the realized noise level when it is known.
pub fn initial_guess(
    y: &DVector<f64>,
    m: usize,
    noise_known: bool,
    sigma_n_realized: f64,
) -> Result<ModelParams, HarnessError> {
    let est = init_params(y, y.len(), m)?;
    let sigma_n = if noise_known {
        sigma_n_realized
    } else {
        est.sigma_n_hat
    };
    Ok(ModelParams::new(
        MarkovParams::clamped(est.p_hat, est.p01_hat),
        est.sigma_theta_hat.max(1e-12),
        sigma_n,
    )?)
}

/// Runs the estimator and the baseline on one instance and scores both.
pub fn evaluate(
    kind: &str,
    sweep_value: f64,
    trial: usize,
    algo: &IbaConfig,
    signal: &SignalInstance,
    meas: &MeasurementSet,
    timing: bool,
) -> Result<(TrialRecord, IbaOutcome), HarnessError> {
    let start = Instant::now();
    let init = initial_guess(&meas.y, meas.m(), algo.noise_known, meas.sigma_n_realized)?;
    let out = run_block_iba(&meas.phi, &meas.y, algo, &init, Some(&signal.w))?;
    let runtime_ms = timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    let baseline = baseline_minnorm_threshold(&meas.phi, &meas.y, algo.th_init)?;
    let params = out.state.params;
    let record = TrialRecord {
        kind: kind.to_owned(),
        sweep_value,
        trial,
        nmse: nmse(&out.w_hat, &signal.w)?,
        support_f1: support_f1(&out.support(), &signal.support)?,
        runtime_ms,
        outer_iters: out.state.outer_iters,
        converged: out.state.converged,
        p_hat: params.markov.p(),
        p01_hat: params.markov.p01(),
        sigma_theta_hat: params.sigma_theta,
        sigma_n_hat: params.sigma_n,
        baseline_nmse: nmse(&baseline, &signal.w)?,
    };
    Ok((record, out))
}

/// Settings of one sweep point: the swept knob replaced by `value`.
pub fn sweep_point(
    cfg: &ExperimentConfig,
    kind: SweepKind,
    value: f64,
) -> Result<(ModelParams, f64, IbaConfig), HarnessError> {
    let mut p = cfg.p;
    let mut p01 = cfg.p01;
    let mut snr_db = cfg.snr_db;
    let mut algo = cfg.algo.clone();
    match kind {
        SweepKind::P01 => p01 = value,
        SweepKind::Alpha => algo.alpha = value,
        SweepKind::Th => algo.th_init = value,
        // E|S| = M (1 - p) = eta N; p10 follows from p and p01
        SweepKind::Eta => p = 1.0 - value * cfg.n as f64 / cfg.m as f64,
        SweepKind::Snr => snr_db = value,
    }
    algo.validate()
        .map_err(|e| HarnessError::Config(format!("{kind} = {value}: {e}")))?;
    let markov = MarkovParams::new(p, p01)
        .map_err(|e| HarnessError::Config(format!("{kind} = {value}: {e}")))?;
    let params = ModelParams::new(markov, cfg.sigma_theta, 0.0)?;
    Ok((params, snr_db, algo))
}

/// One trial of a sweep, reproducible in isolation.
pub fn run_trial(
    cfg: &ExperimentConfig,
    kind: SweepKind,
    sweep_idx: usize,
    trial: usize,
) -> Result<TrialRecord, HarnessError> {
    let value = *cfg
        .values(kind)
        .get(sweep_idx)
        .ok_or_else(|| HarnessError::Config(format!("sweep index {sweep_idx} out of range")))?;
    let (params, snr_db, algo) = sweep_point(cfg, kind, value)?;
    let mut rng = trial_rng(cfg.seed, sweep_idx, trial);
    let (signal, meas) = synthesize(cfg, params, snr_db, &mut rng)?;
    evaluate(kind.name(), value, trial, &algo, &signal, &meas, cfg.timing).map(|(r, _)| r)
}

/// Every (sweep value, trial) pair, in that order. Trials run in parallel;
/// the output order and content do not depend on scheduling.
pub fn run_sweep(cfg: &ExperimentConfig, kind: SweepKind) -> Result<Vec<TrialRecord>, HarnessError> {
    cfg.validate()?;
    let values = cfg.values(kind);
    if values.is_empty() {
        return Err(HarnessError::Config(format!("no values for the {kind} sweep")));
    }
    for &v in values {
        sweep_point(cfg, kind, v)?;
    }
    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    jobs.par_iter()
        .map(|&(s, t)| run_trial(cfg, kind, s, t))
        .collect()
}

/// Mean of `f` over the records whose sweep value equals `value`.
pub fn mean_by_value(records: &[TrialRecord], value: f64, f: impl Fn(&TrialRecord) -> f64) -> f64 {
    let (sum, count) = records
        .iter()
        .filter(|r| r.sweep_value == value)
        .fold((0.0, 0usize), |(s, c), r| (s + f(r), c + 1));
    sum / count as f64
}

/// The instance `generate` and `recover` draw: the base settings at
/// stream `(sweep_idx, trial)`.
pub fn instance(
    cfg: &ExperimentConfig,
    sweep_idx: usize,
    trial: usize,
) -> Result<(SignalInstance, MeasurementSet), HarnessError> {
    let markov = MarkovParams::new(cfg.p, cfg.p01).map_err(|e| HarnessError::Config(e.to_string()))?;
    let params = ModelParams::new(markov, cfg.sigma_theta, 0.0)?;
    let mut rng = trial_rng(cfg.seed, sweep_idx, trial);
    synthesize(cfg, params, cfg.snr_db, &mut rng)
}
