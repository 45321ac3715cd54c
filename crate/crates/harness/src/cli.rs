//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 1 for
//! failures while running.

use std::ffi::OsString;
use std::path::PathBuf;

use block_iba::model::sample_support;
use block_iba::oracle::{exhaustive_map_support, Likelihood};
use block_iba::{MarkovParams, ModelParams};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{CommonArgs, ConfigFile, ExperimentConfig, SweepKind, ValueList};
use crate::io::{write_ranking, write_records, write_spectra, write_trace, Bundle};
use crate::psd::{default_smoothing, half_power_bandwidth, psd_periodogram};
use crate::sweep::{evaluate, instance, run_sweep, trial_rng};
use crate::HarnessError;

#[derive(Debug, Parser)]
#[command(name = "block-iba", version, about = "Block-sparse recovery with Block-IBA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw one synthetic instance and write it as a JSON bundle
    Generate(GenerateArgs),
    /// Run Block-IBA on a bundle or a fresh instance; writes one record
    Recover(RecoverArgs),
    /// Monte-Carlo sweep over one parameter; writes one record per trial
    Sweep(SweepArgs),
    /// Averaged periodograms of support chains
    Psd(PsdArgs),
    /// Exhaustive MAP support search on a small instance
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Bundle to recover instead of drawing a fresh instance
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Also write the per-iteration trace here
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Add a runtime_ms column
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Parameter to sweep: p01, alpha, th, eta or snr
    #[arg(long)]
    pub kind: Option<SweepKind>,
    /// Comma-separated sweep values (a default grid otherwise)
    #[arg(long)]
    pub values: Option<ValueList>,
    /// Add a runtime_ms column
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub timing: Option<bool>,
}

#[derive(Debug, Args)]
pub struct PsdArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated p01 values (default 0.09,0.45)
    #[arg(long)]
    pub values: Option<ValueList>,
    /// Independent chains per p01 value
    #[arg(long)]
    pub chains: Option<usize>,
    /// Chain length
    #[arg(long)]
    pub length: Option<usize>,
    /// Segment length (defaults to the chain length)
    #[arg(long)]
    pub nfft: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LikelihoodArg {
    Printed,
    Gaussian,
}

impl std::str::FromStr for LikelihoodArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Bundle to search instead of drawing a fresh instance
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Determinant power of the support likelihood
    #[arg(long)]
    pub likelihood: Option<LikelihoodArg>,
    /// Write every support with its score here, best first
    #[arg(long)]
    pub ranking: Option<PathBuf>,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Recover(args) => recover(args),
        Command::Sweep(args) => sweep(args),
        Command::Psd(args) => psd(args),
        Command::Oracle(args) => oracle(args),
    }
}

fn resolve(common: &mut CommonArgs) -> Result<(ExperimentConfig, ConfigFile), HarnessError> {
    let file = common.merge_file()?.unwrap_or_default();
    Ok((common.resolve()?, file))
}

fn generate(mut args: GenerateArgs) -> Result<(), HarnessError> {
    let (cfg, _) = resolve(&mut args.common)?;
    let (signal, meas) = instance(&cfg, 0, 0)?;
    let bundle = Bundle::from_instance(&signal, &meas, cfg.seed);
    match &cfg.out {
        Some(path) => bundle.save(path),
        None => {
            let text = serde_json::to_string(&bundle)
                .map_err(|e| HarnessError::Input(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn recover(mut args: RecoverArgs) -> Result<(), HarnessError> {
    let (mut cfg, file) = resolve(&mut args.common)?;
    file.fill(&mut args.input, "input")?;
    file.fill(&mut args.trace, "trace")?;
    file.fill(&mut args.timing, "timing")?;
    cfg.timing = args.timing.unwrap_or(false);

    let (signal, meas) = match &args.input {
        Some(path) => {
            let bundle = Bundle::load(path)?;
            let markov = MarkovParams::clamped(bundle.p, bundle.p01);
            let params = ModelParams::new(markov, bundle.sigma_theta, 0.0)?;
            let signal = block_iba::model::compose_signal(
                bundle.support(),
                block_iba::DVector::from_column_slice(&bundle.theta),
                params,
            )?;
            (signal, bundle.measurements())
        }
        None => instance(&cfg, 0, 0)?,
    };
    let (record, outcome) = evaluate("recover", 0.0, 0, &cfg.algo, &signal, &meas, cfg.timing)?;
    if let Some(path) = &args.trace {
        write_trace(Some(path), &outcome.state.trace)?;
    }
    write_records(cfg.out.as_deref(), &[record])
}

fn sweep(mut args: SweepArgs) -> Result<(), HarnessError> {
    let (mut cfg, file) = resolve(&mut args.common)?;
    file.fill(&mut args.kind, "kind")?;
    file.fill(&mut args.timing, "timing")?;
    file.fill(&mut args.values, "values")?;
    let kind = args
        .kind
        .ok_or_else(|| HarnessError::Config("sweep needs --kind (p01, alpha, th, eta or snr)".into()))?;
    if let Some(ValueList(values)) = args.values {
        *cfg.values_mut(kind) = values;
    }
    cfg.timing = args.timing.unwrap_or(false);
    let records = run_sweep(&cfg, kind)?;
    write_records(cfg.out.as_deref(), &records)
}

fn psd(mut args: PsdArgs) -> Result<(), HarnessError> {
    let (cfg, file) = resolve(&mut args.common)?;
    file.fill(&mut args.chains, "chains")?;
    file.fill(&mut args.length, "length")?;
    file.fill(&mut args.nfft, "nfft")?;
    file.fill(&mut args.values, "values")?;
    let values = args.values.map_or_else(|| vec![0.09, 0.45], |v| v.0);
    let chains = args.chains.unwrap_or(200);
    let length = args.length.unwrap_or(4096);
    let nfft = args.nfft.unwrap_or(length);
    if chains == 0 || length == 0 {
        return Err(HarnessError::Config("chains and length must be positive".into()));
    }

    let mut spectra = Vec::with_capacity(values.len());
    for (idx, &p01) in values.iter().enumerate() {
        let markov = MarkovParams::new(cfg.p, p01)
            .map_err(|e| HarnessError::Config(format!("p01 = {p01}: {e}")))?;
        let seqs = support_chains(&markov, chains, length, cfg.seed, idx)?;
        let spec = psd_periodogram(&seqs, nfft)?;
        let bw = half_power_bandwidth(&spec, default_smoothing(spec.power.len()));
        match bw {
            Some(f) => eprintln!("p01 = {p01}: half-power bandwidth {f}"),
            None => eprintln!("p01 = {p01}: no half-power point"),
        }
        spectra.push((p01, spec));
    }
    write_spectra(cfg.out.as_deref(), &spectra)
}

/// `chains` support sequences as 0/1 reals, each on its own stream.
pub fn support_chains(
    markov: &MarkovParams,
    chains: usize,
    length: usize,
    seed: u64,
    value_idx: usize,
) -> Result<Vec<Vec<f64>>, HarnessError> {
    (0..chains)
        .map(|c| {
            let mut rng = trial_rng(seed, value_idx, c);
            let s = sample_support(length, markov, &mut rng)?;
            Ok(s.as_slice().iter().map(|&b| f64::from(u8::from(b))).collect())
        })
        .collect()
}

fn oracle(mut args: OracleArgs) -> Result<(), HarnessError> {
    // small-instance defaults unless set by flag or file
    let file = args.common.merge_file()?.unwrap_or_default();
    args.common.config = None;
    let c = &mut args.common;
    c.m.get_or_insert(10);
    c.n.get_or_insert(8);
    c.p.get_or_insert(0.8);
    c.p01.get_or_insert(0.45);
    c.snr_db.get_or_insert(30.0);
    let cfg = args.common.resolve()?;
    file.fill(&mut args.input, "input")?;
    file.fill(&mut args.likelihood, "likelihood")?;
    file.fill(&mut args.ranking, "ranking")?;

    let (meas, params, truth) = match &args.input {
        Some(path) => {
            let b = Bundle::load(path)?;
            let params = ModelParams::new(MarkovParams::clamped(b.p, b.p01), b.sigma_theta, b.sigma_n_realized)?;
            (b.measurements(), params, b.support())
        }
        None => {
            let (signal, meas) = instance(&cfg, 0, 0)?;
            let params = ModelParams::new(signal.params.markov, cfg.sigma_theta, meas.sigma_n_realized)?;
            (meas, params, signal.support)
        }
    };
    // a noiseless instance still needs a finite likelihood
    let params = if params.sigma_n > 0.0 {
        params
    } else {
        ModelParams::new(params.markov, params.sigma_theta, 1e-6 * params.sigma_theta)?
    };
    let likelihood = match args.likelihood.unwrap_or(LikelihoodArg::Printed) {
        LikelihoodArg::Printed => Likelihood::Printed,
        LikelihoodArg::Gaussian => Likelihood::Gaussian,
    };
    let result = exhaustive_map_support(&meas.phi, &meas.y, &params, likelihood, args.ranking.is_some())?;
    if let (Some(path), Some(ranking)) = (&args.ranking, &result.ranking) {
        write_ranking(Some(path), ranking)?;
    }
    eprintln!(
        "MAP support {:?} (true {:?})",
        result.s_star.active_indices(),
        truth.active_indices()
    );
    write_ranking(cfg.out.as_deref(), &[(result.s_star, result.score)])
}
