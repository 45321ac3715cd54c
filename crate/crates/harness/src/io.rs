//! On-disk formats: JSON instance bundles and CSV result tables.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use block_iba::{DMatrix, DVector, MeasurementSet, SignalInstance, SupportVector, TraceRow};
use serde::{Deserialize, Serialize};

use crate::psd::Spectrum;
use crate::sweep::TrialRecord;
use crate::HarnessError;

pub const TRACE_HEADER: [&str; 11] = [
    "outer_iter",
    "L_s",
    "L_w",
    "nmse",
    "p_hat",
    "p01_hat",
    "sigma_theta_hat",
    "sigma_n_hat",
    "sigma0",
    "th",
    "mu",
];

pub const RECORD_HEADER: [&str; 13] = [
    "kind",
    "sweep_value",
    "trial",
    "nmse",
    "nmse_db",
    "support_f1",
    "outer_iters",
    "converged",
    "p_hat",
    "p01_hat",
    "sigma_theta_hat",
    "sigma_n_hat",
    "baseline_nmse",
];

pub const RUNTIME_COLUMN: &str = "runtime_ms";
pub const RANKING_HEADER: [&str; 2] = ["support_bitmask", "score"];
pub const PSD_HEADER: [&str; 3] = ["p01", "freq", "power"];

/// One synthetic problem with its ground truth. `snr_db` is `None` for
/// noiseless data; `phi` is stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub p01: f64,
    pub sigma_theta: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub sigma_n_realized: f64,
    pub s: Vec<u8>,
    pub theta: Vec<f64>,
    pub w: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Bundle {
    pub fn from_instance(signal: &SignalInstance, meas: &MeasurementSet, seed: u64) -> Self {
        let phi = &meas.phi;
        Self {
            m: meas.m(),
            n: meas.n(),
            p: signal.params.markov.p(),
            p01: signal.params.markov.p01(),
            sigma_theta: signal.params.sigma_theta,
            snr_db: meas.snr_db.is_finite().then_some(meas.snr_db),
            seed,
            sigma_n_realized: meas.sigma_n_realized,
            s: signal.support.as_slice().iter().map(|&b| u8::from(b)).collect(),
            theta: signal.theta.as_slice().to_vec(),
            w: signal.w.as_slice().to_vec(),
            phi: (0..phi.nrows())
                .map(|i| phi.row(i).iter().copied().collect())
                .collect(),
            y: meas.y.as_slice().to_vec(),
        }
    }

    fn check(&self) -> Result<(), String> {
        let lens = [
            ("s", self.s.len(), self.m),
            ("theta", self.theta.len(), self.m),
            ("w", self.w.len(), self.m),
            ("phi rows", self.phi.len(), self.n),
            ("y", self.y.len(), self.n),
        ];
        for (what, found, expected) in lens {
            if found != expected {
                return Err(format!("{what}: expected {expected} entries, found {found}"));
            }
        }
        if let Some(row) = self.phi.iter().find(|r| r.len() != self.m) {
            return Err(format!("phi row with {} entries, expected {}", row.len(), self.m));
        }
        if self.s.iter().any(|&b| b > 1) {
            return Err("support entries must be 0 or 1".into());
        }
        Ok(())
    }

    pub fn phi(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.m, |i, j| self.phi[i][j])
    }

    pub fn y(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }

    pub fn w(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.w)
    }

    pub fn support(&self) -> SupportVector {
        SupportVector::new(self.s.iter().map(|&b| b == 1).collect())
    }

    pub fn measurements(&self) -> MeasurementSet {
        MeasurementSet {
            phi: self.phi(),
            y: self.y(),
            snr_db: self.snr_db.unwrap_or(f64::INFINITY),
            sigma_n_realized: self.sigma_n_realized,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut out = BufWriter::new(file);
        serde_json::to_writer(&mut out, self).map_err(|e| HarnessError::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        out.write_all(b"\n")
            .and_then(|_| out.flush())
            .map_err(|e| HarnessError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
        let bundle: Bundle =
            serde_json::from_reader(BufReader::new(file)).map_err(|e| HarnessError::Format {
                path: path.into(),
                message: e.to_string(),
            })?;
        bundle.check().map_err(|message| HarnessError::Format {
            path: path.into(),
            message,
        })?;
        Ok(bundle)
    }
}

fn fmt_f64(v: f64) -> String {
    // Display gives the shortest string that parses back to the same value
    format!("{v}")
}

/// CSV writer over a file, or stdout when `path` is `None`.
pub struct CsvSink {
    inner: csv::Writer<Box<dyn Write>>,
    label: String,
}

impl CsvSink {
    pub fn create(path: Option<&Path>) -> Result<Self, HarnessError> {
        let (writer, label): (Box<dyn Write>, String) = match path {
            Some(p) => {
                let file = File::create(p).map_err(|e| HarnessError::io(p, e))?;
                (Box::new(BufWriter::new(file)), p.display().to_string())
            }
            None => (Box::new(std::io::stdout().lock()), "<stdout>".into()),
        };
        Ok(Self {
            inner: csv::Writer::from_writer(writer),
            label,
        })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), HarnessError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.inner.write_record(fields).map_err(|e| self.err(e))
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        self.inner.flush().map_err(|e| HarnessError::io(&self.label, e))
    }

    fn err(&self, e: csv::Error) -> HarnessError {
        HarnessError::Format {
            path: self.label.clone().into(),
            message: e.to_string(),
        }
    }
}

pub fn write_trace(path: Option<&Path>, trace: &[TraceRow]) -> Result<(), HarnessError> {
    let mut sink = CsvSink::create(path)?;
    sink.row(TRACE_HEADER)?;
    for r in trace {
        sink.row([
            r.outer_iter.to_string(),
            fmt_f64(r.l_s),
            fmt_f64(r.l_w),
            r.nmse.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.p_hat),
            fmt_f64(r.p01_hat),
            fmt_f64(r.sigma_theta_hat),
            fmt_f64(r.sigma_n_hat),
            fmt_f64(r.sigma0),
            fmt_f64(r.th),
            fmt_f64(r.mu),
        ])?;
    }
    sink.finish()
}

/// Trial records; the runtime column appears only when every record has one.
pub fn write_records(path: Option<&Path>, records: &[TrialRecord]) -> Result<(), HarnessError> {
    let timed = !records.is_empty() && records.iter().all(|r| r.runtime_ms.is_some());
    let mut sink = CsvSink::create(path)?;
    let mut header: Vec<&str> = RECORD_HEADER.to_vec();
    if timed {
        header.push(RUNTIME_COLUMN);
    }
    sink.row(&header)?;
    for r in records {
        let mut fields = vec![
            r.kind.clone(),
            fmt_f64(r.sweep_value),
            r.trial.to_string(),
            fmt_f64(r.nmse),
            fmt_f64(block_iba::metrics::to_db(r.nmse)),
            fmt_f64(r.support_f1),
            r.outer_iters.to_string(),
            r.converged.to_string(),
            fmt_f64(r.p_hat),
            fmt_f64(r.p01_hat),
            fmt_f64(r.sigma_theta_hat),
            fmt_f64(r.sigma_n_hat),
            fmt_f64(r.baseline_nmse),
        ];
        if let (true, Some(ms)) = (timed, r.runtime_ms) {
            fields.push(fmt_f64(ms));
        }
        sink.row(&fields)?;
    }
    sink.finish()
}

pub fn write_ranking(path: Option<&Path>, ranking: &[(SupportVector, f64)]) -> Result<(), HarnessError> {
    let mut sink = CsvSink::create(path)?;
    sink.row(RANKING_HEADER)?;
    for (s, score) in ranking {
        sink.row([s.bitmask().to_string(), fmt_f64(*score)])?;
    }
    sink.finish()
}

pub fn write_spectra(path: Option<&Path>, spectra: &[(f64, Spectrum)]) -> Result<(), HarnessError> {
    let mut sink = CsvSink::create(path)?;
    sink.row(PSD_HEADER)?;
    for (p01, spec) in spectra {
        for (f, p) in spec.freqs.iter().zip(&spec.power) {
            sink.row([fmt_f64(*p01), fmt_f64(*f), fmt_f64(*p)])?;
        }
    }
    sink.finish()
}
