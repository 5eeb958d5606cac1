//! Scalar diagnostics: kurtosis, sparsity, and the envelope spectrum.

use std::path::Path;

use ndarray::ArrayView2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{format_f64, write_atomically, Signal};

/// Raw (non-excess) kurtosis `m4 / m2^2` with population central moments.
/// A Gaussian scores 3.
pub fn kurtosis(x: &[f64]) -> Result<f64> {
    if x.len() < 4 {
        return Err(Error::InvalidSignal(format!(
            "kurtosis needs at least 4 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (m2, m4) = x.iter().fold((0.0, 0.0), |(m2, m4), &v| {
        let d2 = (v - mean) * (v - mean);
        (m2 + d2, m4 + d2 * d2)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    if m2 <= 0.0 {
        return Err(Error::InvalidSignal(
            "kurtosis of a constant sequence".into(),
        ));
    }
    Ok(m4 / (m2 * m2))
}

/// Fraction of entries with `|x| < rel_threshold * max|m|`; 1 for an all-zero
/// matrix.
pub fn sparsity_fraction(m: ArrayView2<f64>, rel_threshold: f64) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let max = m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if max == 0.0 {
        return 1.0;
    }
    let cut = rel_threshold * max;
    m.iter().filter(|x| x.abs() < cut).count() as f64 / m.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSpectrum {
    pub freqs_hz: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub resolution_hz: f64,
}

/// Spectrum of the mean-removed Hilbert envelope, from 0 Hz to Nyquist.
pub fn envelope_spectrum(x: &Signal) -> Result<EnvelopeSpectrum> {
    let n = x.len();
    if n < 16 {
        return Err(Error::InvalidSignal(format!(
            "envelope spectrum needs at least 16 samples, got {n}"
        )));
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);

    let mut buf: Vec<Complex64> = x
        .samples()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    forward.process(&mut buf);
    // Analytic signal: keep DC (and Nyquist for even n), double positive
    // frequencies, zero negative ones.
    let half = n / 2;
    for (k, z) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k <= (n - 1) / 2 {
            2.0
        } else {
            0.0
        };
        *z *= gain;
    }
    inverse.process(&mut buf);
    let scale = 1.0 / n as f64;
    let envelope: Vec<f64> = buf.iter().map(|z| z.norm() * scale).collect();
    let mean = envelope.iter().sum::<f64>() / n as f64;

    let mut spec: Vec<Complex64> = envelope
        .iter()
        .map(|&e| Complex64::new(e - mean, 0.0))
        .collect();
    forward.process(&mut spec);
    let resolution_hz = x.sample_rate_hz() / n as f64;
    let freqs_hz = (0..=half).map(|k| k as f64 * resolution_hz).collect();
    let amplitudes = spec[..=half].iter().map(|z| z.norm()).collect();
    Ok(EnvelopeSpectrum {
        freqs_hz,
        amplitudes,
        resolution_hz,
    })
}

/// Largest envelope-spectrum line in `[lo, hi]`, never bin 0.
pub fn dominant_cyclic_peak(
    es: &EnvelopeSpectrum,
    search_lo_hz: f64,
    search_hi_hz: f64,
) -> Result<(f64, f64)> {
    let top = es.freqs_hz.last().copied().unwrap_or(0.0);
    if !(search_lo_hz > 0.0 && search_lo_hz < search_hi_hz && search_hi_hz <= top) {
        return Err(Error::InvalidParameter(format!(
            "search band [{search_lo_hz}, {search_hi_hz}] Hz must satisfy 0 < lo < hi <= {top}"
        )));
    }
    let mut best: Option<(f64, f64)> = None;
    for (&f, &a) in es.freqs_hz.iter().zip(&es.amplitudes).skip(1) {
        if f < search_lo_hz || f > search_hi_hz {
            continue;
        }
        if best.is_none_or(|(_, b)| a > b) {
            best = Some((f, a));
        }
    }
    best.ok_or_else(|| {
        Error::InvalidParameter(format!(
            "no spectral line inside [{search_lo_hz}, {search_hi_hz}] Hz"
        ))
    })
}

pub fn write_envelope_csv(es: &EnvelopeSpectrum, path: &Path) -> Result<()> {
    let mut text = String::from("frequency_hz,amplitude\n");
    for (f, a) in es.freqs_hz.iter().zip(&es.amplitudes) {
        text.push_str(&format_f64(*f));
        text.push(',');
        text.push_str(&format_f64(*a));
        text.push('\n');
    }
    write_atomically(path, text.as_bytes())
}
