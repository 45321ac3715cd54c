//! Experiment drivers, file formats and the command line for `block-iba`.
//!
//! Everything here is deterministic given the configuration and the master
//! seed: every trial draws from its own ChaCha8 stream keyed by the sweep
//! index and trial index, and results are merged in that order no matter
//! how rayon schedules the work.

use std::path::PathBuf;

pub mod cli;
pub mod config;
pub mod io;
pub mod psd;
pub mod sweep;

pub use config::{ExperimentConfig, SweepKind};
pub use sweep::{run_sweep, run_trial, TrialRecord};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Model(#[from] block_iba::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    Input(String),

    /// Bad flags or configuration; the CLI maps this to exit code 2.
    #[error("configuration error: {0}")]
    Config(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
