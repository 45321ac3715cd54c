//! Acceptance gate. Every test prints one `ACCEPTANCE <name>: PASS|FAIL`
//! line with the measured value and the pinned tolerance, then asserts.
//!
//! Run with `cargo test -p block-iba-harness --test acceptance -- --nocapture`.

use std::process::Command;

use block_iba::estimator::{
    cost_l_s, e_step_dual, e_step_primal, gradient_l_s, m_step, step_size_bound, StepBound,
};
use block_iba::learning::{update_p, update_p01, update_sigma_theta};
use block_iba::metrics::nmse;
use block_iba::model::{sample_measurement_matrix, sample_support, synthesize_measurements};
use block_iba::oracle::{exhaustive_map_support, finite_diff_gradient, Likelihood};
use block_iba::{
    run_block_iba, DVector, IbaConfig, IbaState, MarkovParams, ModelParams, SupportVector,
};
use block_iba_harness::psd::{default_smoothing, half_power_bandwidth, psd_periodogram};
use block_iba_harness::sweep::{initial_guess, mean_by_value, synthesize, trial_rng};
use block_iba_harness::{run_sweep, ExperimentConfig, SweepKind};
use rand::Rng;
use rand_distr::StandardNormal;

fn report(name: &str, pass: bool, detail: String) {
    println!(
        "ACCEPTANCE {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn normal_vec(len: usize, scale: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn reference_setup(p01: f64) -> ExperimentConfig {
    ExperimentConfig {
        m: 512,
        n: 192,
        p: 0.9,
        p01,
        sigma_theta: 1.0,
        snr_db: 15.0,
        trials: 50,
        ..ExperimentConfig::default()
    }
}

#[test]
fn step_size_bound_reproduction() {
    const TARGET: f64 = 2.1434e-6;
    // mean realized noise level of the reference setup at 15 dB
    let cfg = reference_setup(0.09);
    let params = ModelParams::new(MarkovParams::new(cfg.p, cfg.p01).unwrap(), 1.0, 0.0).unwrap();
    let trials = 200;
    let mut sum = 0.0;
    for t in 0..trials {
        let mut rng = trial_rng(cfg.seed, 0, t);
        let (_, meas) = synthesize(&cfg, params, 15.0, &mut rng).unwrap();
        sum += meas.sigma_n_realized;
    }
    let sigma_n = sum / trials as f64;
    let bound = step_size_bound(1.0, sigma_n, 1.0, 512).unwrap();
    let rel = (bound - TARGET) / TARGET;
    let pass = rel.abs() <= 0.10;
    report(
        "step_size_bound",
        pass,
        format!("sigma_n = {sigma_n:.5}, bound = {bound:.5e}, target 2.1434e-6, rel err {rel:+.3} (tol +-0.10)"),
    );
    assert!(pass);
}

#[test]
fn gradient_correctness() {
    let markov = MarkovParams::new(0.9, 0.3).unwrap();
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = trial_rng(101, 0, inst as usize);
        let phi = sample_measurement_matrix(8, 16, &mut rng).unwrap();
        let theta = normal_vec(16, 1.0, &mut rng);
        let y = normal_vec(8, 1.0, &mut rng);
        let s = DVector::from_fn(16, |_, _| rng.random_range(-0.2..1.2));
        let (sigma0, sigma_n) = (0.3 + 0.05 * inst as f64, 0.5);
        let analytic = gradient_l_s(&s, &theta, &phi, &y, &markov, sigma0, sigma_n).unwrap();
        let numeric = finite_diff_gradient(
            |x| cost_l_s(x, &theta, &phi, &y, &markov, sigma0, sigma_n),
            &s,
            1e-6,
        )
        .unwrap();
        for (a, f) in analytic.iter().zip(numeric.iter()) {
            // relative error, floored at unit scale for near-zero coordinates
            worst = worst.max((a - f).abs() / a.abs().max(f.abs()).max(1.0));
        }
    }
    let pass = worst < 1e-5;
    report(
        "gradient_correctness",
        pass,
        format!("20 instances (8,16), max rel coordinate error {worst:.2e} (tol 1e-5)"),
    );
    assert!(pass);
}

#[test]
fn m_step_monotonicity() {
    let config = IbaConfig {
        mu_auto: true,
        step_bound: StepBound::Analytic,
        m_step_iters: 5,
        ..IbaConfig::default()
    };
    let (n, m) = (96, 256);
    let mut violations = 0;
    let mut steps = 0;
    for inst in 0..100 {
        let mut rng = trial_rng(202, 0, inst);
        let markov = MarkovParams::new(0.9, 0.45).unwrap();
        let support = sample_support(m, &markov, &mut rng).unwrap();
        let theta = normal_vec(m, 1.0, &mut rng);
        let phi = sample_measurement_matrix(n, m, &mut rng).unwrap();
        let w = DVector::from_fn(m, |i, _| if support.get(i) { theta[i] } else { 0.0 });
        let meas = synthesize_measurements(phi, &w, 15.0, &mut rng).unwrap();
        let init = ModelParams::new(markov, 1.0, meas.sigma_n_realized).unwrap();
        let mut state = IbaState::initialize(&meas.phi, &meas.y, &config, &init).unwrap();
        state.theta_hat = theta;
        state.s_relaxed = DVector::from_fn(m, |_, _| rng.random_range(0.0..1.0));
        let rep = m_step(&mut state, &config, &meas.phi, &meas.y).unwrap();
        violations += rep.violations;
        steps += rep.costs.len();
    }
    let pass = violations == 0;
    report(
        "m_step_monotonicity",
        pass,
        format!("100 instances (96,256), {steps} steps at mu = bound/2, {violations} violations beyond -1e-9 (tol 0)"),
    );
    assert!(pass);
}

#[test]
fn estep_dual_identity() {
    let mut worst: f64 = 0.0;
    for inst in 0..50 {
        let mut rng = trial_rng(303, 0, inst);
        let n = rng.random_range(6..24);
        let m = rng.random_range(n + 1..3 * n);
        let phi = sample_measurement_matrix(n, m, &mut rng).unwrap();
        let support = SupportVector::new((0..m).map(|_| rng.random_bool(0.6)).collect());
        let gamma = DVector::from_fn(m, |_, _| rng.random_range(0.2..5.0));
        let y = normal_vec(n, 1.0, &mut rng);
        let sigma_n = rng.random_range(0.05..0.5);
        let primal = e_step_primal(&phi, &support.to_real(), &y, sigma_n, &gamma).unwrap();
        let dual = e_step_dual(&phi, &support.to_real(), &y, sigma_n, &gamma).unwrap();
        let rel = |a: &DVector<f64>, b: &DVector<f64>| (a - b).norm() / a.norm().max(f64::MIN_POSITIVE);
        worst = worst
            .max(rel(&primal.mu_theta, &dual.mu_theta))
            .max(rel(&primal.sigma_theta_diag, &dual.sigma_theta_diag));
    }
    let pass = worst < 1e-8;
    report(
        "estep_dual_identity",
        pass,
        format!("50 instances, max relative disagreement {worst:.2e} (tol 1e-8)"),
    );
    assert!(pass);
}

#[test]
fn oracle_consistency() {
    // E|S| = M (1 - p) = 2; the oracle gets the generating parameters and
    // the realized noise level, so Block-IBA is run with the noise known too
    let cfg = ExperimentConfig {
        m: 10,
        n: 8,
        p: 0.8,
        p01: 0.45,
        snr_db: 30.0,
        seed: 404,
        ..ExperimentConfig::default()
    };
    let algo = IbaConfig {
        noise_known: true,
        ..IbaConfig::default()
    };
    let markov = MarkovParams::new(cfg.p, cfg.p01).unwrap();
    let gen = ModelParams::new(markov, cfg.sigma_theta, 0.0).unwrap();
    let seeds = 100;
    let (mut matches, mut matched_nmse) = (0usize, 0.0);
    let (mut below, mut oracle_true) = (0usize, 0usize);
    for t in 0..seeds {
        let mut rng = trial_rng(cfg.seed, 0, t);
        let (signal, meas) = synthesize(&cfg, gen, cfg.snr_db, &mut rng).unwrap();
        let truth = ModelParams::new(markov, cfg.sigma_theta, meas.sigma_n_realized).unwrap();
        let map = exhaustive_map_support(&meas.phi, &meas.y, &truth, Likelihood::Printed, false).unwrap();
        let init = initial_guess(&meas.y, cfg.m, true, meas.sigma_n_realized).unwrap();
        let out = run_block_iba(&meas.phi, &meas.y, &algo, &init, None).unwrap();
        oracle_true += usize::from(map.s_star == signal.support);
        if out.support() == map.s_star {
            let e = nmse(&out.w_hat, &signal.w).unwrap();
            matches += 1;
            matched_nmse += e;
            below += usize::from(e < 1e-2);
        }
    }
    let rate = matches as f64 / seeds as f64;
    let mean_nmse = matched_nmse / matches.max(1) as f64;
    let pass = rate >= 0.6 && mean_nmse < 1e-2;
    report(
        "oracle_consistency",
        pass,
        format!("M=10 N=8 30 dB: support match {matches}/{seeds} (tol >= 60%), mean NMSE on matches {mean_nmse:.2e} (tol < 1e-2); \
             {below}/{matches} matches individually below 1e-2, oracle = truth in {oracle_true}/{seeds}"),
    );
    assert!(pass);
}

#[test]
fn baseline_dominance() {
    let mut cfg = reference_setup(0.45);
    cfg.p01_values = vec![0.45];
    let records = run_sweep(&cfg, SweepKind::P01).unwrap();
    let iba = mean_by_value(&records, 0.45, |r| r.nmse);
    let base = mean_by_value(&records, 0.45, |r| r.baseline_nmse);
    let pass = iba < base;
    report(
        "baseline_dominance",
        pass,
        format!(
            "512x192 p01=0.45 15 dB, 50 trials: Block-IBA {iba:.4} ({:.2} dB) vs baseline {base:.4} ({:.2} dB)",
            10.0 * iba.log10(),
            10.0 * base.log10()
        ),
    );
    assert!(pass);
}

#[test]
fn snr_monotonicity() {
    let cfg = ExperimentConfig {
        m: 256,
        n: 96,
        p: 0.9,
        p01: 0.45,
        trials: 50,
        snr_values: vec![10.0, 15.0, 25.0],
        ..ExperimentConfig::default()
    };
    let records = run_sweep(&cfg, SweepKind::Snr).unwrap();
    let means: Vec<f64> = cfg
        .snr_values
        .iter()
        .map(|&v| mean_by_value(&records, v, |r| r.nmse))
        .collect();
    let pass = means.windows(2).all(|w| w[1] < w[0]);
    report(
        "snr_monotonicity",
        pass,
        format!("256x96 p01=0.45, mean NMSE at 10/15/25 dB = {:.4}/{:.4}/{:.4} (strictly decreasing)", means[0], means[1], means[2]),
    );
    assert!(pass);
}

#[test]
fn psd_bandwidth_ordering() {
    let bandwidth = |p01: f64, idx: usize| {
        let markov = MarkovParams::new(0.9, p01).unwrap();
        let seqs = block_iba_harness::cli::support_chains(&markov, 200, 4096, 505, idx).unwrap();
        let spec = psd_periodogram(&seqs, 4096).unwrap();
        half_power_bandwidth(&spec, default_smoothing(spec.power.len())).unwrap()
    };
    let wide_claim = bandwidth(0.45, 0);
    let narrow_claim = bandwidth(0.09, 1);
    let pass = wide_claim < narrow_claim;
    report(
        "psd_bandwidth_ordering",
        pass,
        format!("p=0.9, 200 chains x 4096: bandwidth(p01=0.45) = {wide_claim:.4}, bandwidth(p01=0.09) = {narrow_claim:.4} (required 0.45 < 0.09)"),
    );
    assert!(pass);
}

#[test]
fn parameter_learning_consistency() {
    let markov = MarkovParams::new(0.9, 0.2).unwrap();
    let mut p01_sum = 0.0;
    for c in 0..50 {
        let mut rng = trial_rng(606, 0, c);
        let s = sample_support(2048, &markov, &mut rng).unwrap();
        p01_sum += update_p01(&s, 0.5);
    }
    let p01_hat = p01_sum / 50.0;

    let mut rng = trial_rng(606, 1, 0);
    let s = sample_support(100_000, &markov, &mut rng).unwrap();
    let p_hat = update_p(&s);

    let cfg = reference_setup(0.09);
    let gen = ModelParams::new(MarkovParams::new(0.9, 0.09).unwrap(), 1.0, 0.0).unwrap();
    let mut st_sum = 0.0;
    for t in 0..200 {
        let mut rng = trial_rng(606, 2, t);
        let (_, meas) = synthesize(&cfg, gen, f64::INFINITY, &mut rng).unwrap();
        st_sum += update_sigma_theta(&meas.y, cfg.n, cfg.m, 0.9).unwrap();
    }
    let st_hat = st_sum / 200.0;

    let pass = (p01_hat - 0.2).abs() <= 0.03 && (p_hat - 0.9).abs() <= 0.01 && (st_hat - 1.0).abs() <= 0.1;
    report(
        "parameter_learning",
        pass,
        format!("p01 {p01_hat:.4} (0.2 +-0.03), p {p_hat:.4} (0.9 +-0.01), sigma_theta {st_hat:.4} (1.0 +-0.1)"),
    );
    assert!(pass);
}

#[test]
fn cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_block-iba");
    let run = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(extra)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out).unwrap()
    };
    let recover = ["recover", "--m", "512", "--n", "192", "--p", "0.9", "--p01", "0.45", "--snr-db", "15", "--seed", "7"];
    let sweep = ["sweep", "--kind", "snr", "--values", "10,25", "--m", "64", "--n", "32", "--trials", "3", "--seed", "9"];
    let same_recover = run("r1.csv", &recover) == run("r2.csv", &recover);
    let same_sweep = run("s1.csv", &sweep) == run("s2.csv", &sweep);
    let pass = same_recover && same_sweep;
    report(
        "cli_determinism",
        pass,
        format!("recover identical: {same_recover}, sweep identical: {same_sweep}"),
    );
    assert!(pass);
}
