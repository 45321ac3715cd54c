//! Experiment configuration: flags, `key = value` files and defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use block_iba::estimator::StepBound;
use block_iba::IbaConfig;
use clap::Args;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepKind {
    P01,
    Alpha,
    Th,
    Eta,
    Snr,
}

impl SweepKind {
    pub const ALL: [SweepKind; 5] = [Self::P01, Self::Alpha, Self::Th, Self::Eta, Self::Snr];

    pub fn name(self) -> &'static str {
        match self {
            Self::P01 => "p01",
            Self::Alpha => "alpha",
            Self::Th => "th",
            Self::Eta => "eta",
            Self::Snr => "snr",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown sweep kind `{s}` (expected p01, alpha, th, eta or snr)"))
    }
}

/// Fully resolved settings of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub trials: usize,
    pub snr_db: f64,
    pub p: f64,
    pub p01: f64,
    pub sigma_theta: f64,
    pub p01_values: Vec<f64>,
    pub alpha_values: Vec<f64>,
    pub th_values: Vec<f64>,
    /// Expected active count over `N`.
    pub eta_values: Vec<f64>,
    pub snr_values: Vec<f64>,
    pub seed: u64,
    pub algo: IbaConfig,
    /// Record wall-clock time per trial (breaks byte-identical output).
    pub timing: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 512,
            n: 192,
            trials: 50,
            snr_db: 15.0,
            p: 0.9,
            p01: 0.09,
            sigma_theta: 1.0,
            p01_values: (1..=10).map(|k| round6(0.09 * k as f64)).collect(),
            alpha_values: vec![0.6, 0.7, 0.8, 0.9, 0.95, 0.98],
            th_values: (1..=9).map(|k| round6(0.1 * k as f64)).collect(),
            eta_values: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            snr_values: vec![10.0, 15.0, 20.0, 25.0, 30.0],
            seed: 1,
            algo: IbaConfig::default(),
            timing: false,
            out: None,
        }
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl ExperimentConfig {
    pub fn values(&self, kind: SweepKind) -> &[f64] {
        match kind {
            SweepKind::P01 => &self.p01_values,
            SweepKind::Alpha => &self.alpha_values,
            SweepKind::Th => &self.th_values,
            SweepKind::Eta => &self.eta_values,
            SweepKind::Snr => &self.snr_values,
        }
    }

    pub fn values_mut(&mut self, kind: SweepKind) -> &mut Vec<f64> {
        match kind {
            SweepKind::P01 => &mut self.p01_values,
            SweepKind::Alpha => &mut self.alpha_values,
            SweepKind::Th => &mut self.th_values,
            SweepKind::Eta => &mut self.eta_values,
            SweepKind::Snr => &mut self.snr_values,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.m == 0 || self.n == 0 {
            return bad(format!("M and N must be positive (M = {}, N = {})", self.m, self.n));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.p01) {
            return bad(format!("p = {} and p01 = {} must lie in [0, 1]", self.p, self.p01));
        }
        if !(self.sigma_theta > 0.0 && self.sigma_theta.is_finite()) {
            return bad(format!("sigma-theta must be positive, got {}", self.sigma_theta));
        }
        if self.snr_db.is_nan() {
            return bad("snr-db is NaN".into());
        }
        self.algo
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// Flags shared by every subcommand. Each one can also come from the
/// `--config` file under the same name; explicit flags win.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Signal length
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of measurements
    #[arg(long)]
    pub n: Option<usize>,
    /// Probability of an inactive entry
    #[arg(long)]
    pub p: Option<f64>,
    /// Transition probability active -> inactive
    #[arg(long)]
    pub p01: Option<f64>,
    /// Amplitude standard deviation
    #[arg(long)]
    pub sigma_theta: Option<f64>,
    /// Measurement SNR in dB (`inf` for noiseless)
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Monte-Carlo trials per sweep value
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fixed M-step step size (turns off the automatic step)
    #[arg(long)]
    pub mu: Option<f64>,
    /// Decay factor of sigma0 and the threshold
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Initial threshold
    #[arg(long)]
    pub th: Option<f64>,
    /// Inner steepest-ascent steps per M-step
    #[arg(long)]
    pub m_step_iters: Option<usize>,
    /// Relative-change stopping tolerance
    #[arg(long)]
    pub outer_tol: Option<f64>,
    /// Cap on outer iterations
    #[arg(long)]
    pub max_outer: Option<usize>,
    /// Use the realized noise level instead of learning it
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub noise_known: Option<bool>,
    /// Automatic step rule: `curvature` or `analytic`
    #[arg(long)]
    pub step_bound: Option<StepBoundArg>,
    /// Output path (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key = value` file with defaults for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StepBoundArg {
    Curvature,
    Analytic,
}

impl From<StepBoundArg> for StepBound {
    fn from(v: StepBoundArg) -> Self {
        match v {
            StepBoundArg::Curvature => StepBound::Curvature,
            StepBoundArg::Analytic => StepBound::Analytic,
        }
    }
}

impl FromStr for StepBoundArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <Self as clap::ValueEnum>::from_str(s, true)
    }
}

/// Keys a config file may use. Subcommands ignore keys they have no use for.
pub const CONFIG_KEYS: &[&str] = &[
    "m",
    "n",
    "p",
    "p01",
    "sigma-theta",
    "snr-db",
    "trials",
    "seed",
    "mu",
    "alpha",
    "th",
    "m-step-iters",
    "outer-tol",
    "max-outer",
    "noise-known",
    "step-bound",
    "out",
    "kind",
    "values",
    "input",
    "trace",
    "timing",
    "chains",
    "length",
    "nfft",
    "likelihood",
    "ranking",
];

/// Parsed `key = value` file. `#` starts a comment; underscores in keys are
/// read as dashes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", no + 1))?;
            let key = key.trim().replace('_', "-");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key `{key}`", no + 1));
            }
            let value = value.trim();
            if value.is_empty() {
                return Err(format!("line {}: empty value for `{key}`", no + 1));
            }
            if entries.insert(key.clone(), value.to_owned()).is_some() {
                return Err(format!("line {}: duplicate key `{key}`", no + 1));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text).map_err(|msg| HarnessError::Config(format!("{}: {msg}", path.display())))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError>
    where
        T::Err: fmt::Display,
    {
        self.entries
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| HarnessError::Config(format!("config key `{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    /// Fills `slot` from the file unless a flag already set it.
    pub fn fill<T: FromStr>(&self, slot: &mut Option<T>, key: &str) -> Result<(), HarnessError>
    where
        T::Err: fmt::Display,
    {
        if slot.is_none() {
            *slot = self.get(key)?;
        }
        Ok(())
    }
}

/// Comma-separated list of numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let values: Result<Vec<f64>, _> = s.split(',').map(|v| v.trim().parse::<f64>()).collect();
    match values {
        Ok(v) if !v.is_empty() => Ok(v),
        Ok(_) => Err("empty list".into()),
        Err(e) => Err(format!("`{s}`: {e}")),
    }
}

/// A comma-separated list as a single flag value.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueList(pub Vec<f64>);

impl FromStr for ValueList {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_list(s).map(ValueList)
    }
}

impl CommonArgs {
    /// Merges the `--config` file (if any) under the explicit flags.
    pub fn merge_file(&mut self) -> Result<Option<ConfigFile>, HarnessError> {
        let Some(path) = self.config.clone() else {
            return Ok(None);
        };
        let file = ConfigFile::load(&path)?;
        file.fill(&mut self.m, "m")?;
        file.fill(&mut self.n, "n")?;
        file.fill(&mut self.p, "p")?;
        file.fill(&mut self.p01, "p01")?;
        file.fill(&mut self.sigma_theta, "sigma-theta")?;
        file.fill(&mut self.snr_db, "snr-db")?;
        file.fill(&mut self.trials, "trials")?;
        file.fill(&mut self.seed, "seed")?;
        file.fill(&mut self.mu, "mu")?;
        file.fill(&mut self.alpha, "alpha")?;
        file.fill(&mut self.th, "th")?;
        file.fill(&mut self.m_step_iters, "m-step-iters")?;
        file.fill(&mut self.outer_tol, "outer-tol")?;
        file.fill(&mut self.max_outer, "max-outer")?;
        file.fill(&mut self.noise_known, "noise-known")?;
        file.fill(&mut self.step_bound, "step-bound")?;
        file.fill(&mut self.out, "out")?;
        Ok(Some(file))
    }

    /// Applies the flags on top of the defaults.
    pub fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut cfg = ExperimentConfig::default();
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            m => cfg.m,
            n => cfg.n,
            p => cfg.p,
            p01 => cfg.p01,
            sigma_theta => cfg.sigma_theta,
            snr_db => cfg.snr_db,
            trials => cfg.trials,
            seed => cfg.seed,
            alpha => cfg.algo.alpha,
            th => cfg.algo.th_init,
            m_step_iters => cfg.algo.m_step_iters,
            outer_tol => cfg.algo.outer_tol,
            max_outer => cfg.algo.max_outer_iters,
            noise_known => cfg.algo.noise_known,
        }
        if let Some(mu) = self.mu {
            cfg.algo.mu = mu;
            cfg.algo.mu_auto = false;
        }
        if let Some(rule) = self.step_bound {
            cfg.algo.step_bound = rule.into();
        }
        cfg.out = self.out.clone();
        cfg.validate()?;
        Ok(cfg)
    }
}
