//! Loading, saving, and synthesizing time-domain signals.

mod synth;
mod wav;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{
    generate_colored_noise, generate_fault_signal, noise_std_for_snr, FaultSignalSpec,
};
pub use wav::{load_wav, load_wav_channel, save_wav, WavEncoding};

/// Real-valued samples at a fixed sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSignal("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidSignal(format!("sample {i} is not finite")));
        }
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        Ok(Signal {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn scaled(&self, factor: f64) -> Result<Signal> {
        Signal::new(
            self.samples.iter().map(|x| x * factor).collect(),
            self.sample_rate_hz,
        )
    }
}

/// On-disk representation for [`save_signal`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalFormat {
    Csv,
    Wav(WavEncoding),
}

/// One value per line; a single non-numeric first line is taken as a header.
pub fn load_csv(path: &Path, sample_rate_hz: f64) -> Result<Signal> {
    let text = fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_csv(&text, sample_rate_hz)
}

fn parse_csv(text: &str, sample_rate_hz: f64) -> Result<Signal> {
    let mut samples = Vec::new();
    for (index, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match trimmed.parse::<f64>() {
            Ok(x) => samples.push(x),
            Err(_) if index == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: index + 1,
                    content: trimmed.to_string(),
                })
            }
        }
    }
    if samples.is_empty() {
        return Err(Error::Empty("CSV file contains no samples".into()));
    }
    Signal::new(samples, sample_rate_hz)
}

pub fn save_signal(signal: &Signal, path: &Path, format: SignalFormat) -> Result<()> {
    match format {
        SignalFormat::Csv => {
            let mut text = String::with_capacity(signal.len() * 24);
            for x in signal.samples() {
                text.push_str(&format_f64(*x));
                text.push('\n');
            }
            write_atomically(path, text.as_bytes())
        }
        SignalFormat::Wav(encoding) => save_wav(signal, path, encoding),
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write to a sibling temporary file, then rename over `path`.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidParameter(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}
