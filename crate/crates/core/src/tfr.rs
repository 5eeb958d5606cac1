//! Short-time Fourier transform, least-squares inverse, and magnitude
//! spectrogram.
//!
//! Frame `k` covers samples `[k * hop, k * hop + window_len)`. The signal is
//! not padded; a trailing partial frame is dropped. Only the one-sided
//! spectrum (bins `0..=n_dft / 2`) is stored.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{write_atomically, Signal};

/// Envelope values below this fraction of the envelope maximum are treated
/// as uncovered by any frame.
const ENVELOPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_len: usize,
    pub overlap: usize,
    pub n_dft: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams {
            window_len: 128,
            overlap: 100,
            n_dft: 512,
        }
    }
}

impl StftParams {
    pub fn new(window_len: usize, overlap: usize, n_dft: usize) -> Result<Self> {
        let params = StftParams {
            window_len,
            overlap,
            n_dft,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 {
            return Err(Error::InvalidParameter(format!(
                "window length must be at least 2, got {}",
                self.window_len
            )));
        }
        if self.overlap >= self.window_len {
            return Err(Error::InvalidParameter(format!(
                "overlap {} must be smaller than the window length {}",
                self.overlap, self.window_len
            )));
        }
        if self.n_dft < self.window_len {
            return Err(Error::InvalidParameter(format!(
                "DFT size {} must be at least the window length {}",
                self.n_dft, self.window_len
            )));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.window_len - self.overlap
    }

    /// Number of one-sided frequency bins, `n_dft / 2 + 1`.
    pub fn n_bins(&self) -> usize {
        self.n_dft / 2 + 1
    }

    /// Number of full frames that fit in `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop() + 1
        }
    }
}

/// Periodic Hamming window, `0.54 - 0.46 cos(2 pi k / n)`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "window length must be at least 2, got {n}"
        )));
    }
    Ok((0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect())
}

/// Complex one-sided STFT of a signal.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// `n_bins x n_frames`.
    pub frames: Array2<Complex64>,
    pub params: StftParams,
    pub sample_rate_hz: f64,
    pub original_len: usize,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.frames.ncols()
    }

    pub fn bin_freqs(&self) -> Vec<f64> {
        bin_frequencies(&self.params, self.sample_rate_hz)
    }

    /// Time of each frame's center, in seconds.
    pub fn frame_times(&self) -> Vec<f64> {
        let hop = self.params.hop() as f64;
        let half = self.params.window_len as f64 / 2.0;
        (0..self.n_frames())
            .map(|k| (k as f64 * hop + half) / self.sample_rate_hz)
            .collect()
    }

    fn check_consistent(&self) -> Result<()> {
        self.params.validate()?;
        let expected = (
            self.params.n_bins(),
            self.params.n_frames(self.original_len),
        );
        if self.frames.dim() != expected {
            return Err(Error::DimensionMismatch(format!(
                "spectrogram is {}x{}, parameters imply {}x{}",
                self.frames.nrows(),
                self.frames.ncols(),
                expected.0,
                expected.1
            )));
        }
        Ok(())
    }
}

pub fn bin_frequencies(params: &StftParams, sample_rate_hz: f64) -> Vec<f64> {
    (0..params.n_bins())
        .map(|i| i as f64 * sample_rate_hz / params.n_dft as f64)
        .collect()
}

pub fn stft(signal: &Signal, params: &StftParams) -> Result<Spectrogram> {
    params.validate()?;
    let x = signal.samples();
    if x.len() < params.window_len {
        return Err(Error::InvalidSignal(format!(
            "signal has {} samples, shorter than one window of {}",
            x.len(),
            params.window_len
        )));
    }
    let window = hamming_window(params.window_len)?;
    let n_frames = params.n_frames(x.len());
    let n_bins = params.n_bins();
    let hop = params.hop();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(params.n_dft);

    let mut frames = Array2::<Complex64>::zeros((n_bins, n_frames));
    let mut buf = vec![Complex64::new(0.0, 0.0); params.n_dft];
    for (k, mut column) in frames.axis_iter_mut(Axis(1)).enumerate() {
        let start = k * hop;
        for (n, slot) in buf.iter_mut().enumerate() {
            *slot = if n < params.window_len {
                Complex64::new(x[start + n] * window[n], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (dst, src) in column.iter_mut().zip(&buf[..n_bins]) {
            *dst = *src;
        }
    }

    Ok(Spectrogram {
        frames,
        params: *params,
        sample_rate_hz: signal.sample_rate_hz(),
        original_len: x.len(),
    })
}

/// Least-squares inverse STFT (normalized weighted overlap-add).
pub fn istft(spec: &Spectrogram) -> Result<Signal> {
    spec.check_consistent()?;
    let params = spec.params;
    let window = hamming_window(params.window_len)?;
    let n_dft = params.n_dft;
    let hop = params.hop();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_dft);
    let scale = 1.0 / n_dft as f64;

    let mut out = vec![0.0; spec.original_len];
    let mut envelope = vec![0.0; spec.original_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_dft];
    for (k, column) in spec.frames.axis_iter(Axis(1)).enumerate() {
        hermitian_fill(column.iter().copied(), &mut buf);
        ifft.process(&mut buf);
        let start = k * hop;
        for n in 0..params.window_len {
            out[start + n] += buf[n].re * scale * window[n];
            envelope[start + n] += window[n] * window[n];
        }
    }

    let env_max = envelope.iter().copied().fold(0.0, f64::max);
    let floor = ENVELOPE_FLOOR * env_max;
    for (y, &e) in out.iter_mut().zip(&envelope) {
        *y = if e > floor && e > 0.0 { *y / e } else { 0.0 };
    }
    Signal::new(out, spec.sample_rate_hz)
}

/// Rebuild a full-length spectrum from its one-sided half.
fn hermitian_fill(half: impl Iterator<Item = Complex64>, buf: &mut [Complex64]) {
    let n = buf.len();
    let n_bins = n / 2 + 1;
    for (i, value) in half.take(n_bins).enumerate() {
        buf[i] = value;
        if i > 0 && n - i > i {
            buf[n - i] = value.conj();
        }
    }
}

/// Entrywise modulus of the spectrogram, the non-negative matrix `S`.
pub fn magnitude(spec: &Spectrogram) -> Array2<f64> {
    spec.frames.mapv(|z| z.norm())
}

/// Write a magnitude matrix as CSV: a header row of frame times and one row
/// per frequency bin, led by the bin frequency.
pub fn write_magnitude_csv(spec: &Spectrogram, path: &Path) -> Result<()> {
    let mag = magnitude(spec);
    let mut text = String::from("frequency_hz");
    for t in spec.frame_times() {
        text.push(',');
        text.push_str(&format!("{t:.16e}"));
    }
    text.push('\n');
    for (freq, row) in spec.bin_freqs().iter().zip(mag.axis_iter(Axis(0))) {
        text.push_str(&format!("{freq:.16e}"));
        for value in row {
            text.push(',');
            text.push_str(&format!("{value:.16e}"));
        }
        text.push('\n');
    }
    write_atomically(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::new(
            (0..len).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
            50_000.0,
        )
        .unwrap()
    }

    fn interior_rel_error(a: &[f64], b: &[f64], margin: usize) -> f64 {
        let range = margin..a.len() - margin;
        let num: f64 = range.clone().map(|i| (a[i] - b[i]).powi(2)).sum();
        let den: f64 = range.map(|i| b[i].powi(2)).sum();
        (num / den).sqrt()
    }

    #[test]
    fn hamming_closed_form() {
        let w = hamming_window(128).unwrap();
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[64] - 1.0).abs() < 1e-15);
        let w4 = hamming_window(4).unwrap();
        for (a, b) in w4.iter().zip([0.08, 0.54, 1.0, 0.54]) {
            assert!((a - b).abs() < 1e-15, "{w4:?}");
        }
        assert!(hamming_window(1).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(StftParams::new(128, 128, 512).is_err());
        assert!(StftParams::new(128, 100, 64).is_err());
        let p = StftParams::default();
        assert_eq!(p.hop(), 28);
        assert_eq!(p.n_bins(), 257);
    }

    #[test]
    fn frame_count() {
        let spec = stft(&random_signal(50_000, 0), &StftParams::default()).unwrap();
        assert_eq!(spec.n_frames(), (50_000 - 128) / 28 + 1);
        assert_eq!(spec.n_frames(), 1782);
        assert_eq!(spec.n_bins(), 257);
        let freqs = spec.bin_freqs();
        assert_eq!(freqs[100], 100.0 * 50_000.0 / 512.0);
    }

    #[test]
    fn too_short_signal() {
        let s = Signal::new(vec![1.0; 100], 1000.0).unwrap();
        assert!(matches!(
            stft(&s, &StftParams::default()),
            Err(Error::InvalidSignal(_))
        ));
    }

    #[test]
    fn zero_in_zero_out() {
        let s = Signal::new(vec![0.0; 1000], 1000.0).unwrap();
        let spec = stft(&s, &StftParams::default()).unwrap();
        assert!(spec.frames.iter().all(|z| z.norm() == 0.0));
        let back = istft(&spec).unwrap();
        assert!(back.samples().iter().all(|&x| x == 0.0));
    }

    // Direct DFT of each windowed frame; independent of the FFT path.
    #[test]
    fn matches_direct_dft() {
        let params = StftParams::new(16, 6, 20).unwrap();
        let sig = random_signal(70, 3);
        let spec = stft(&sig, &params).unwrap();
        let w = hamming_window(16).unwrap();
        for k in 0..spec.n_frames() {
            for i in 0..params.n_bins() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, (&x, &wn)) in sig.samples()[k * 10..].iter().zip(&w).enumerate() {
                    let phase = -2.0 * PI * (i * n) as f64 / 20.0;
                    acc += Complex64::from_polar(x * wn, phase);
                }
                assert!((acc - spec.frames[[i, k]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn tone_energy_concentrates_at_its_bin() {
        let fs = 50_000.0;
        let f = 100.0 * fs / 512.0;
        let x: Vec<f64> = (0..5000)
            .map(|n| (2.0 * PI * f * n as f64 / fs).sin())
            .collect();
        let spec = stft(&Signal::new(x, fs).unwrap(), &StftParams::default()).unwrap();
        let mag = magnitude(&spec);
        for column in mag.axis_iter(Axis(1)) {
            let total: f64 = column.iter().map(|m| m * m).sum();
            // A 128-point Hamming main lobe spans 4 * 512 / 128 = 16 padded bins.
            let near: f64 = (92..=108).map(|i| column[i] * column[i]).sum();
            assert!(near >= 0.95 * total, "{near} of {total}");
        }
    }

    #[test]
    fn tone_peak_magnitude() {
        let fs = 50_000.0;
        let f = 100.0 * fs / 512.0;
        let x: Vec<f64> = (0..5000)
            .map(|n| (2.0 * PI * f * n as f64 / fs).cos())
            .collect();
        let spec = stft(&Signal::new(x, fs).unwrap(), &StftParams::default()).unwrap();
        let mag = magnitude(&spec);
        let expected = hamming_window(128).unwrap().iter().sum::<f64>() / 2.0;
        for k in 0..spec.n_frames() {
            assert!((mag[[100, k]] - expected).abs() <= 0.01 * expected);
        }
    }

    #[test]
    fn magnitude_of_three_four() {
        let params = StftParams::new(4, 0, 4).unwrap();
        let mut spec = stft(&Signal::new(vec![0.0; 4], 1.0).unwrap(), &params).unwrap();
        spec.frames[[1, 0]] = Complex64::new(3.0, 4.0);
        assert_eq!(magnitude(&spec)[[1, 0]], 5.0);
        assert_eq!(magnitude(&spec)[[0, 0]], 0.0);
    }

    #[test]
    fn round_trip_interior() {
        let x = random_signal(50_000, 1);
        let spec = stft(&x, &StftParams::default()).unwrap();
        let y = istft(&spec).unwrap();
        assert_eq!(y.len(), x.len());
        let err = interior_rel_error(y.samples(), x.samples(), 128);
        assert!(err <= 1e-8, "relative error {err}");
    }

    #[test]
    fn round_trip_odd_dft() {
        let x = random_signal(3000, 2);
        let spec = stft(&x, &StftParams::new(64, 40, 101).unwrap()).unwrap();
        let y = istft(&spec).unwrap();
        assert!(interior_rel_error(y.samples(), x.samples(), 64) <= 1e-8);
    }

    #[test]
    fn single_frame_impulse() {
        let mut x = vec![0.0; 128];
        x[37] = 1.0;
        let spec = stft(
            &Signal::new(x.clone(), 1000.0).unwrap(),
            &StftParams::default(),
        )
        .unwrap();
        assert_eq!(spec.n_frames(), 1);
        let y = istft(&spec).unwrap();
        for (a, b) in y.samples().iter().zip(&x) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn frame_energy_matches_windowed_energy() {
        // Parseval per frame: sum over the full spectrum equals n_dft times the
        // time-domain energy; recover the full sum from the one-sided half.
        let params = StftParams::default();
        let x = random_signal(2000, 4);
        let spec = stft(&x, &params).unwrap();
        let w = hamming_window(128).unwrap();
        for k in 0..spec.n_frames() {
            let time: f64 = (0..128)
                .map(|n| (x.samples()[k * 28 + n] * w[n]).powi(2))
                .sum();
            let col = spec.frames.column(k);
            let mut freq = col[0].norm_sqr() + col[256].norm_sqr();
            freq += 2.0 * (1..256).map(|i| col[i].norm_sqr()).sum::<f64>();
            assert!((freq / 512.0 - time).abs() <= 1e-10 * time);
        }
    }

    #[test]
    fn inconsistent_spectrogram_rejected() {
        let mut spec = stft(&random_signal(1000, 5), &StftParams::default()).unwrap();
        spec.original_len = 5000;
        assert!(matches!(istft(&spec), Err(Error::DimensionMismatch(_))));
    }
}
