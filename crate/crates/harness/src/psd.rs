//! Averaged periodograms of support sequences.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::HarnessError;

/// One-sided spectrum on the grid `k / nfft`, `k = 0..=nfft/2`
/// (cycles per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

/// Mean-removed, rectangular-window periodograms of non-overlapping
/// `nfft`-long segments, averaged over segments and sequences. The
/// one-sided bins sum to the average segment variance.
pub fn psd_periodogram<S: AsRef<[f64]>>(sequences: &[S], nfft: usize) -> Result<Spectrum, HarnessError> {
    if sequences.is_empty() {
        return Err(HarnessError::Input("no sequences for the periodogram".into()));
    }
    if nfft < 2 {
        return Err(HarnessError::Input(format!("nfft must be at least 2, got {nfft}")));
    }
    let len = sequences[0].as_ref().len();
    if sequences.iter().any(|s| s.as_ref().len() != len) {
        return Err(HarnessError::Input("sequences differ in length".into()));
    }
    if len < nfft {
        return Err(HarnessError::Input(format!("sequence length {len} is shorter than nfft {nfft}")));
    }

    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let bins = nfft / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut segments = 0usize;
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    for seq in sequences {
        for chunk in seq.as_ref().chunks_exact(nfft) {
            let mean = chunk.iter().sum::<f64>() / nfft as f64;
            for (b, &x) in buf.iter_mut().zip(chunk) {
                *b = Complex::new(x - mean, 0.0);
            }
            fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                let p = buf[k].norm_sqr() / (nfft * nfft) as f64;
                // fold the negative frequencies onto their mirror bins
                let mirrored = k != 0 && !(nfft.is_multiple_of(2) && k == nfft / 2);
                *a += if mirrored { 2.0 * p } else { p };
            }
            segments += 1;
        }
    }
    let freqs = (0..bins).map(|k| k as f64 / nfft as f64).collect();
    let power = acc.into_iter().map(|a| a / segments as f64).collect();
    Ok(Spectrum { freqs, power })
}

/// Centered moving average with odd window `width`, shrinking at the edges.
pub fn smooth(power: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    (0..power.len())
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(power.len());
            power[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Default smoothing window: about 1/128 of the grid, odd, at least 1.
pub fn default_smoothing(bins: usize) -> usize {
    (bins / 64) | 1
}

/// First frequency above the spectral peak where the smoothed spectrum
/// drops below half of the peak. The DC bin is skipped because mean
/// removal empties it. `None` if the spectrum never drops that far.
pub fn half_power_bandwidth(spec: &Spectrum, width: usize) -> Option<f64> {
    if spec.power.len() < 2 {
        return None;
    }
    let s = smooth(&spec.power[1..], width);
    let (peak_at, peak) = s
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best });
    if peak.is_nan() || peak <= 0.0 {
        return None;
    }
    s[peak_at..]
        .iter()
        .position(|&v| v < 0.5 * peak)
        .map(|off| spec.freqs[peak_at + off + 1])
}

/// Spectrum of the stationary two-state support chain,
/// `var (1 - rho^2) / (1 - 2 rho cos w + rho^2)` with `rho = 1 - p01 - p10`,
/// folded onto the one-sided grid like [`psd_periodogram`] (per bin, for a
/// length-`nfft` grid).
pub fn markov_support_psd(p: f64, p01: f64, nfft: usize) -> Spectrum {
    let p10 = p01 * (1.0 - p) / p;
    let rho = 1.0 - p01 - p10;
    let var = p * (1.0 - p);
    let bins = nfft / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 / nfft as f64).collect();
    let power = freqs
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let w = 2.0 * std::f64::consts::PI * f;
            let density = var * (1.0 - rho * rho) / (1.0 - 2.0 * rho * w.cos() + rho * rho);
            let mirrored = k != 0 && !(nfft.is_multiple_of(2) && k == nfft / 2);
            density / nfft as f64 * if mirrored { 2.0 } else { 1.0 }
        })
        .collect();
    Spectrum { freqs, power }
}

/// Closed-form half-power frequency of the chain spectrum above (cycles
/// per sample); `None` when the spectrum is flat or not low-pass.
pub fn markov_half_power_frequency(p: f64, p01: f64) -> Option<f64> {
    let p10 = p01 * (1.0 - p) / p;
    let rho = 1.0 - p01 - p10;
    if rho <= 0.0 {
        return None;
    }
    let c = (1.0 + rho * rho - 2.0 * (1.0 - rho) * (1.0 - rho)) / (2.0 * rho);
    (c.abs() <= 1.0).then(|| c.acos() / (2.0 * std::f64::consts::PI))
}
