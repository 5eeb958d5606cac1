//! Synthetic faulty-bearing signals: a train of decaying resonances buried in
//! AR(1)-colored Gaussian noise.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Signal;
use crate::error::{Error, Result};

/// Impulse responses are cut once `decay * (t - onset)` exceeds this.
const TAIL_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultSignalSpec {
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Impulse repetition rate.
    pub fault_freq_hz: f64,
    /// Resonance excited by each impulse; the informative band sits here.
    pub carrier_freq_hz: f64,
    /// Exponential damping of the resonance, 1/s.
    pub decay_rate: f64,
    pub impulse_amplitude: f64,
    pub noise_std: f64,
    /// AR(1) coefficient of the noise; 0 is white.
    pub noise_color_pole: f64,
    pub rng_seed: u64,
}

impl Default for FaultSignalSpec {
    fn default() -> Self {
        FaultSignalSpec::vibration()
    }
}

impl FaultSignalSpec {
    /// Test-rig-like vibration: 91.5 Hz fault, band near 20 kHz, 50 kHz, 1 s,
    /// noise at -5 dB SNR.
    pub fn vibration() -> Self {
        let spec = FaultSignalSpec {
            duration_s: 1.0,
            sample_rate_hz: 50_000.0,
            fault_freq_hz: 91.5,
            carrier_freq_hz: 20_000.0,
            decay_rate: 2_000.0,
            impulse_amplitude: 1.0,
            noise_std: 0.0,
            noise_color_pole: 0.5,
            rng_seed: 0,
        };
        spec.with_snr_db(-5.0).expect("preset is valid")
    }

    /// Idler-like acoustic signal: 5.5 Hz fault, band near 2.5 kHz, 48 kHz, 1 s.
    pub fn idler() -> Self {
        let spec = FaultSignalSpec {
            duration_s: 1.0,
            sample_rate_hz: 48_000.0,
            fault_freq_hz: 5.5,
            carrier_freq_hz: 2_500.0,
            decay_rate: 300.0,
            impulse_amplitude: 1.0,
            noise_std: 0.0,
            noise_color_pole: 0.5,
            rng_seed: 0,
        };
        spec.with_snr_db(-5.0).expect("preset is valid")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("duration_s", self.duration_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("fault_freq_hz", self.fault_freq_hz),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("decay_rate", self.decay_rate),
            ("impulse_amplitude", self.impulse_amplitude),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {x}"
                )));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        if !(0.0..1.0).contains(&self.noise_color_pole) {
            return Err(Error::InvalidParameter(format!(
                "noise_color_pole must lie in [0, 1), got {}",
                self.noise_color_pole
            )));
        }
        if self.carrier_freq_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::InvalidParameter(format!(
                "carrier {} Hz is not below Nyquist ({} Hz)",
                self.carrier_freq_hz,
                self.sample_rate_hz / 2.0
            )));
        }
        if self.fault_freq_hz >= self.carrier_freq_hz {
            return Err(Error::InvalidParameter(format!(
                "fault frequency {} Hz must be below the carrier {} Hz",
                self.fault_freq_hz, self.carrier_freq_hz
            )));
        }
        if self.n_samples() == 0 {
            return Err(Error::InvalidParameter(
                "signal would have no samples".into(),
            ));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    /// Impulse onset times `k / fault_freq`, `k = 0..=floor(duration * fault_freq)`.
    pub fn impulse_times(&self) -> Vec<f64> {
        let count = (self.duration_s * self.fault_freq_hz).floor() as usize + 1;
        (0..count).map(|k| k as f64 / self.fault_freq_hz).collect()
    }

    /// The noise-free impulse train.
    pub fn clean_samples(&self) -> Vec<f64> {
        let n = self.n_samples();
        let fs = self.sample_rate_hz;
        let tail = (TAIL_CUTOFF / self.decay_rate * fs).ceil() as usize;
        let mut out = vec![0.0; n];
        for onset in self.impulse_times() {
            let first = (onset * fs).ceil() as usize;
            for (i, slot) in out.iter_mut().enumerate().skip(first).take(tail) {
                let dt = i as f64 / fs - onset;
                *slot += self.impulse_amplitude
                    * (-self.decay_rate * dt).exp()
                    * (2.0 * PI * self.carrier_freq_hz * dt).sin();
            }
        }
        out
    }

    /// Same spec with `noise_std` chosen so that clean-signal power over noise
    /// power equals `snr_db`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Result<Self> {
        self.noise_std = 0.0;
        self.validate()?;
        self.noise_std = noise_std_for_snr(&self.clean_samples(), snr_db);
        Ok(self)
    }
}

/// Noise standard deviation giving `snr_db` against `clean` (power ratio).
pub fn noise_std_for_snr(clean: &[f64], snr_db: f64) -> f64 {
    let power = clean.iter().map(|x| x * x).sum::<f64>() / clean.len().max(1) as f64;
    (power / 10f64.powf(snr_db / 10.0)).sqrt()
}

pub fn generate_fault_signal(spec: &FaultSignalSpec) -> Result<Signal> {
    spec.validate()?;
    let mut samples = spec.clean_samples();
    let noise = generate_colored_noise(
        samples.len(),
        spec.noise_std,
        spec.noise_color_pole,
        spec.rng_seed,
    )?;
    for (x, e) in samples.iter_mut().zip(noise) {
        *x += e;
    }
    Signal::new(samples, spec.sample_rate_hz)
}

/// AR(1) Gaussian noise `y[n] = pole * y[n-1] + g[n]`, rescaled to an
/// empirical standard deviation of `std`.
pub fn generate_colored_noise(n: usize, std: f64, pole: f64, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "noise length must be positive".into(),
        ));
    }
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise std must be non-negative, got {std}"
        )));
    }
    if !(0.0..1.0).contains(&pole) {
        return Err(Error::InvalidParameter(format!(
            "pole must lie in [0, 1), got {pole}"
        )));
    }
    if std == 0.0 {
        return Ok(vec![0.0; n]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(n);
    // Start from the stationary distribution so there is no warm-up transient.
    let mut prev: f64 = StandardNormal.sample(&mut rng);
    prev /= (1.0 - pole * pole).sqrt();
    y.push(prev);
    for _ in 1..n {
        let g: f64 = StandardNormal.sample(&mut rng);
        prev = pole * prev + g;
        y.push(prev);
    }

    if n > 1 {
        let mean = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        if sd > 0.0 {
            let scale = std / sd;
            y.iter_mut().for_each(|v| *v *= scale);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::kurtosis;

    fn std_of(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    }

    fn lag1_autocorrelation(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        num / den
    }

    #[test]
    fn silent_noise() {
        assert!(generate_colored_noise(10, 0.0, 0.3, 1)
            .unwrap()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn noise_std_and_determinism() {
        let a = generate_colored_noise(10_000, 2.5, 0.7, 9).unwrap();
        let b = generate_colored_noise(10_000, 2.5, 0.7, 9).unwrap();
        assert_eq!(a, b);
        assert!((std_of(&a) - 2.5).abs() < 1e-12);
        assert!(generate_colored_noise(10, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn white_noise_is_gaussian() {
        let x = generate_colored_noise(1_000_000, 1.0, 0.0, 17).unwrap();
        let k = kurtosis(&x).unwrap();
        assert!((k - 3.0).abs() <= 0.05, "kurtosis {k}");
    }

    #[test]
    fn ar1_autocorrelation() {
        let x = generate_colored_noise(1_000_000, 1.0, 0.9, 4).unwrap();
        let r = lag1_autocorrelation(&x);
        assert!((r - 0.9).abs() <= 0.01, "lag-1 autocorrelation {r}");
    }

    fn quiet_vibration() -> FaultSignalSpec {
        FaultSignalSpec {
            noise_std: 0.0,
            ..FaultSignalSpec::vibration()
        }
    }

    #[test]
    fn length_and_onsets() {
        let spec = quiet_vibration();
        let s = generate_fault_signal(&spec).unwrap();
        assert_eq!(s.len(), 50_000);
        assert_eq!(
            spec.impulse_times().len(),
            (1.0f64 * 91.5).floor() as usize + 1
        );
        // Every onset falls inside the record.
        assert!(spec.impulse_times().iter().all(|&t| t < spec.duration_s));
    }

    #[test]
    fn noise_free_signal_is_impulsive() {
        let s = generate_fault_signal(&quiet_vibration()).unwrap();
        assert!(kurtosis(s.samples()).unwrap() > 10.0);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = FaultSignalSpec::vibration();
        assert_eq!(
            generate_fault_signal(&spec).unwrap(),
            generate_fault_signal(&spec).unwrap()
        );
        let other = FaultSignalSpec {
            rng_seed: 1,
            ..spec.clone()
        };
        assert_ne!(
            generate_fault_signal(&spec).unwrap(),
            generate_fault_signal(&other).unwrap()
        );
    }

    #[test]
    fn energy_decays_between_onsets() {
        let spec = quiet_vibration();
        let s = generate_fault_signal(&spec).unwrap();
        let fs = spec.sample_rate_hz;
        let onsets: Vec<usize> = spec
            .impulse_times()
            .iter()
            .map(|t| (t * fs).ceil() as usize)
            .collect();
        let carrier_period = (fs / spec.carrier_freq_hz).round() as usize * 5;
        for pair in onsets.windows(2) {
            // Energy over consecutive blocks of whole carrier periods.
            let energies: Vec<f64> = s.samples()[pair[0]..pair[1]]
                .chunks_exact(carrier_period)
                .map(|c| c.iter().map(|x| x * x).sum())
                .collect();
            for e in energies.windows(2) {
                assert!(e[1] <= e[0] * (1.0 + 1e-9), "{e:?}");
            }
        }
    }

    #[test]
    fn snr_calibration() {
        let spec = FaultSignalSpec::vibration();
        let clean = spec.clean_samples();
        let p_clean = clean.iter().map(|x| x * x).sum::<f64>() / clean.len() as f64;
        let ratio = 10.0 * (p_clean / spec.noise_std.powi(2)).log10();
        assert!((ratio + 5.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_specs() {
        let base = FaultSignalSpec::vibration();
        let nyquist = FaultSignalSpec {
            carrier_freq_hz: 25_000.0,
            ..base.clone()
        };
        assert!(generate_fault_signal(&nyquist).is_err());
        let slow = FaultSignalSpec {
            fault_freq_hz: 30_000.0,
            carrier_freq_hz: 20_000.0,
            ..base.clone()
        };
        assert!(generate_fault_signal(&slow).is_err());
        let pole = FaultSignalSpec {
            noise_color_pole: 1.0,
            ..base
        };
        assert!(generate_fault_signal(&pole).is_err());
    }
}
