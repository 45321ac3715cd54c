//! Block iterative Bayesian recovery of non-i.i.d. block-sparse signals.
//!
//! The signal model is a Bernoulli-Gaussian hidden Markov model: a binary
//! support `s` generated by a stationary two-state Markov chain gates an
//! i.i.d. Gaussian amplitude vector `theta`, and the observation is
//! `y = Phi (s * theta) + n`. Recovery alternates an amplitude MAP solve
//! with Gamma hyperpriors (E-step), a steepest-ascent update of a
//! continuously relaxed support (M-step) and closed-form learning of the
//! model parameters.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, experiment
//! drivers and the command line live in `block-iba-harness`.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::too_many_arguments)]
// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
pub mod estimator;
pub mod learning;
mod linalg;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod special;

pub use error::{Error, Result};
pub use estimator::{
    binarize, run_block_iba, IbaConfig, IbaOutcome, IbaState, PosteriorStats, TraceRow,
};
pub use learning::ParamEstimate;
pub use model::{
    HyperState, MarkovParams, MeasurementSet, ModelParams, SignalInstance, SupportVector,
};
pub use oracle::{Likelihood, OracleResult};

pub use nalgebra::{DMatrix, DVector};
