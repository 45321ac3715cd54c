//! Domain types and the synthetic BGHMM generator.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};

/// Transition structure of the two-state support chain.
///
/// `p` is the stationary probability of an inactive sample, `p10` the
/// probability of switching on and `p01` the probability of switching off.
/// The three are tied by `p01 = p * p10 / (1 - p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovParams {
    p: f64,
    p10: f64,
    p01: f64,
}

impl MarkovParams {
    /// Builds the chain from the inactive probability and the switch-off
    /// probability, deriving `p10 = p01 (1 - p) / p`.
    pub fn new(p: f64, p01: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain("p", p));
        }
        if !(0.0..=1.0).contains(&p01) {
            return Err(Error::domain("p01", p01));
        }
        let p10 = if p == 0.0 {
            // an always-active chain only exists without deactivations
            if p01 != 0.0 {
                return Err(Error::domain("p01", p01));
            }
            1.0
        } else {
            p01 * (1.0 - p) / p
        };
        if p10 > 1.0 {
            return Err(Error::domain("p10", p10));
        }
        Ok(Self { p, p10, p01 })
    }

    /// Like [`MarkovParams::new`] but pulls learned estimates back into the
    /// open domain where both transition probabilities stay valid.
    pub fn clamped(p: f64, p01: f64) -> Self {
        const EPS: f64 = 1e-6;
        let p = p.clamp(EPS, 1.0 - EPS);
        let p01 = p01.clamp(0.0, 1.0).min(p / (1.0 - p));
        Self::new(p, p01).expect("clamped parameters are in domain")
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn p10(&self) -> f64 {
        self.p10
    }

    pub fn p01(&self) -> f64 {
        self.p01
    }

    /// `Pr{s_{i+1} = 1 | s_i}`.
    pub fn prob_on_given(&self, prev_active: bool) -> f64 {
        if prev_active {
            1.0 - self.p01
        } else {
            self.p10
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub markov: MarkovParams,
    pub sigma_theta: f64,
    pub sigma_n: f64,
}

impl ModelParams {
    pub fn new(markov: MarkovParams, sigma_theta: f64, sigma_n: f64) -> Result<Self> {
        if !(sigma_theta > 0.0) || !sigma_theta.is_finite() {
            return Err(Error::domain("sigma_theta", sigma_theta));
        }
        if !(sigma_n >= 0.0) {
            return Err(Error::domain("sigma_n", sigma_n));
        }
        Ok(Self {
            markov,
            sigma_theta,
            sigma_n,
        })
    }
}

/// Precisions of the amplitude prior and of the noise, with the shape/rate
/// constants of their Gamma hyperpriors.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperState {
    pub gamma: DVector<f64>,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl HyperState {
    pub const DEFAULT_PRIOR: f64 = 1e-4;

    /// Unit precisions everywhere and the non-informative `1e-4` constants.
    pub fn new(m: usize, beta: f64) -> Result<Self> {
        Self::with_priors(
            DVector::from_element(m, 1.0),
            beta,
            Self::DEFAULT_PRIOR,
            Self::DEFAULT_PRIOR,
            Self::DEFAULT_PRIOR,
            Self::DEFAULT_PRIOR,
        )
    }

    pub fn with_priors(
        gamma: DVector<f64>,
        beta: f64,
        a: f64,
        b: f64,
        c: f64,
        d: f64,
    ) -> Result<Self> {
        if let Some(&g) = gamma.iter().find(|g| !(**g >= 0.0)) {
            return Err(Error::domain("gamma", g));
        }
        if !(beta > 0.0) {
            return Err(Error::domain("beta", beta));
        }
        for (name, v) in [("a", a), ("b", b), ("c", c), ("d", d)] {
            if !(v > 0.0) {
                return Err(Error::domain(name, v));
            }
        }
        Ok(Self {
            gamma,
            beta,
            a,
            b,
            c,
            d,
        })
    }

    pub fn sigma_n(&self) -> f64 {
        1.0 / libm::sqrt(self.beta)
    }
}

/// Binary activity pattern. The relaxed, real-valued view used during the
/// M-step is a plain `DVector<f64>`; see [`SupportVector::from_relaxed`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportVector(Vec<bool>);

impl SupportVector {
    pub fn new(active: Vec<bool>) -> Self {
        Self(active)
    }

    pub fn zeros(m: usize) -> Self {
        Self(alloc::vec![false; m])
    }

    /// Entry `i` is active iff `relaxed[i] > th` (ties are inactive).
    pub fn from_relaxed(relaxed: &DVector<f64>, th: f64) -> Self {
        Self(relaxed.iter().map(|&v| v > th).collect())
    }

    /// Bit `i` of `mask` is entry `i`.
    pub fn from_bitmask(mask: u64, m: usize) -> Self {
        Self((0..m).map(|i| mask >> i & 1 == 1).collect())
    }

    pub fn bitmask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | (u64::from(b) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, active: bool) {
        self.0[i] = active;
    }

    pub fn count_active(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn to_real(&self) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|&b| f64::from(u8::from(b))))
    }
}

/// Ground truth for one synthetic draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalInstance {
    pub support: SupportVector,
    pub theta: DVector<f64>,
    pub w: DVector<f64>,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub phi: DMatrix<f64>,
    pub y: DVector<f64>,
    pub snr_db: f64,
    pub sigma_n_realized: f64,
}

impl MeasurementSet {
    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn m(&self) -> usize {
        self.phi.ncols()
    }
}

/// Draws a support of length `m` from the stationary chain: the first entry
/// is Bernoulli(1 - p), every later one follows its predecessor's row.
pub fn sample_support<R: Rng + ?Sized>(
    m: usize,
    markov: &MarkovParams,
    rng: &mut R,
) -> Result<SupportVector> {
    if m == 0 {
        return Err(Error::domain("M", 0.0));
    }
    let mut s = Vec::with_capacity(m);
    let mut prev = rng.random::<f64>() < 1.0 - markov.p();
    s.push(prev);
    for _ in 1..m {
        prev = rng.random::<f64>() < markov.prob_on_given(prev);
        s.push(prev);
    }
    Ok(SupportVector(s))
}

pub fn sample_amplitudes<R: Rng + ?Sized>(
    m: usize,
    sigma_theta: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !(sigma_theta > 0.0) || !sigma_theta.is_finite() {
        return Err(Error::domain("sigma_theta", sigma_theta));
    }
    Ok(DVector::from_fn(m, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        sigma_theta * z
    }))
}

/// `w_i = s_i * theta_i`.
pub fn compose_signal(
    support: SupportVector,
    theta: DVector<f64>,
    params: ModelParams,
) -> Result<SignalInstance> {
    check_len("theta", support.len(), theta.len())?;
    let w = DVector::from_iterator(
        theta.len(),
        support
            .as_slice()
            .iter()
            .zip(theta.iter())
            .map(|(&s, &t)| if s { t } else { 0.0 }),
    );
    Ok(SignalInstance {
        support,
        theta,
        w,
        params,
    })
}

/// Support, then amplitudes, from one generator.
pub fn sample_signal<R: Rng + ?Sized>(
    m: usize,
    params: ModelParams,
    rng: &mut R,
) -> Result<SignalInstance> {
    let support = sample_support(m, &params.markov, rng)?;
    let theta = sample_amplitudes(m, params.sigma_theta, rng)?;
    compose_signal(support, theta, params)
}

/// Uniform `[-1, 1]` entries with every column scaled to unit Euclidean norm.
pub fn sample_measurement_matrix<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::domain("N", 0.0));
    }
    if m == 0 {
        return Err(Error::domain("M", 0.0));
    }
    let mut phi = DMatrix::zeros(n, m);
    for j in 0..m {
        let mut col = phi.column_mut(j);
        loop {
            for v in col.iter_mut() {
                *v = rng.random_range(-1.0..=1.0);
            }
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
                break;
            }
        }
    }
    Ok(phi)
}

/// Builds `y = Phi w + n` with the noise rescaled so that
/// `20 log10(|Phi w| / |n|)` equals `snr_db` for this very realization.
/// An infinite SNR yields a noiseless observation.
pub fn synthesize_measurements<R: Rng + ?Sized>(
    phi: DMatrix<f64>,
    w: &DVector<f64>,
    snr_db: f64,
    rng: &mut R,
) -> Result<MeasurementSet> {
    check_len("w", phi.ncols(), w.len())?;
    if snr_db.is_nan() {
        return Err(Error::domain("snr_db", snr_db));
    }
    let clean = &phi * w;
    let n = phi.nrows();
    if snr_db == f64::INFINITY {
        return Ok(MeasurementSet {
            phi,
            y: clean,
            snr_db,
            sigma_n_realized: 0.0,
        });
    }
    let signal_norm = clean.norm();
    if !(signal_norm > 0.0) {
        return Err(Error::Degenerate("Phi w = 0 with a finite SNR"));
    }
    let mut noise = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    while noise.norm() == 0.0 {
        noise = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    }
    let target = signal_norm / libm::pow(10.0, snr_db / 20.0);
    noise *= target / noise.norm();
    let sigma_n_realized = noise.norm() / libm::sqrt(n as f64);
    Ok(MeasurementSet {
        phi,
        y: clean + noise,
        snr_db,
        sigma_n_realized,
    })
}

/// Log density of the smoothed Bernoulli-Gaussian source,
/// `p N(w; 0, sigma_1^2) + (1 - p) N(w; 0, sigma_theta^2)`.
pub fn bg_log_pdf(w: f64, p: f64, sigma_theta: f64, sigma_1: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("p", p));
    }
    if !(sigma_theta > 0.0) {
        return Err(Error::domain("sigma_theta", sigma_theta));
    }
    if !(sigma_1 > 0.0) {
        return Err(Error::domain("sigma_1", sigma_1));
    }
    Ok(log_sum_exp(
        libm::log(p) + log_normal(w, sigma_1),
        libm::log(1.0 - p) + log_normal(w, sigma_theta),
    ))
}

pub(crate) fn log_normal(x: f64, sigma: f64) -> f64 {
    -0.5 * (x / sigma) * (x / sigma) - libm::log(sigma) - 0.5 * libm::log(2.0 * PI)
}

pub(crate) fn log_sum_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + libm::log1p(libm::exp(a.min(b) - hi))
}
