//! Frequency-band filter characteristics and STFT-domain filtering.

use std::fmt;
use std::path::Path;

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::{format_f64, write_atomically, Signal};
use crate::tfr::{istft, stft, Spectrogram, StftParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorSource {
    Nmu,
    Nmf,
    Sk,
    Custom,
}

impl fmt::Display for SelectorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SelectorSource::Nmu => "nmu",
            SelectorSource::Nmf => "nmf",
            SelectorSource::Sk => "sk",
            SelectorSource::Custom => "custom",
        };
        f.write_str(name)
    }
}

/// Labels carried by every characteristic extracted from one factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectorMeta {
    pub source: SelectorSource,
    pub rank: Option<usize>,
    pub trial: Option<usize>,
}

/// Per-bin filter weights, max-normalized to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCharacteristic {
    pub weights: Vec<f64>,
    pub bin_freqs_hz: Vec<f64>,
    pub source: SelectorSource,
    pub rank: Option<usize>,
    pub trial: Option<usize>,
    pub column: Option<usize>,
}

impl FilterCharacteristic {
    /// Build from raw non-negative weights, normalizing by their maximum.
    pub fn from_weights(
        weights: Vec<f64>,
        bin_freqs_hz: Vec<f64>,
        source: SelectorSource,
    ) -> Result<Self> {
        if weights.len() != bin_freqs_hz.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} frequency bins",
                weights.len(),
                bin_freqs_hz.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(
                "filter weights must be finite and non-negative".into(),
            ));
        }
        let max = weights.iter().copied().fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::AllZeroColumns);
        }
        Ok(FilterCharacteristic {
            weights: weights.iter().map(|w| w / max).collect(),
            bin_freqs_hz,
            source,
            rank: None,
            trial: None,
            column: None,
        })
    }

    /// Frequency of the largest weight (lowest bin on ties).
    pub fn peak_frequency_hz(&self) -> f64 {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        self.bin_freqs_hz[best]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("frequency_hz,weight\n");
        for (f, w) in self.bin_freqs_hz.iter().zip(&self.weights) {
            text.push_str(&format_f64(*f));
            text.push(',');
            text.push_str(&format_f64(*w));
            text.push('\n');
        }
        write_atomically(path, text.as_bytes())
    }
}

/// One characteristic per non-zero column of `W`, each divided by its
/// maximum. Returns the characteristics and the number of zero columns
/// dropped.
pub fn selectors_from_w(
    w: ArrayView2<f64>,
    bin_freqs: &[f64],
    meta: SelectorMeta,
) -> Result<(Vec<FilterCharacteristic>, usize)> {
    if w.nrows() != bin_freqs.len() {
        return Err(Error::DimensionMismatch(format!(
            "W has {} rows for {} frequency bins",
            w.nrows(),
            bin_freqs.len()
        )));
    }
    if w.iter().any(|&x| !x.is_finite()) {
        return Err(Error::InvalidParameter("W has non-finite entries".into()));
    }
    if w.iter().any(|&x| x < 0.0) {
        return Err(Error::NegativeInput);
    }
    let mut filters = Vec::with_capacity(w.ncols());
    let mut dropped = 0;
    for (j, column) in w.axis_iter(Axis(1)).enumerate() {
        match FilterCharacteristic::from_weights(column.to_vec(), bin_freqs.to_vec(), meta.source) {
            Ok(mut filter) => {
                filter.rank = meta.rank;
                filter.trial = meta.trial;
                filter.column = Some(j);
                filters.push(filter);
            }
            Err(Error::AllZeroColumns) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    if filters.is_empty() {
        return Err(Error::AllZeroColumns);
    }
    Ok((filters, dropped))
}

/// Per-bin spectral kurtosis `<|X|^4> / <|X|^2>^2 - 2` over frames; 0 for
/// bins with no energy.
pub fn spectral_kurtosis(spec: &Spectrogram) -> Result<Vec<f64>> {
    let k = spec.n_frames();
    if k < 4 {
        return Err(Error::InvalidSignal(format!(
            "spectral kurtosis needs at least 4 frames, got {k}"
        )));
    }
    Ok(spec
        .frames
        .axis_iter(Axis(0))
        .map(|row| {
            let (m2, m4) = row.iter().fold((0.0, 0.0), |(m2, m4), z| {
                let p = z.norm_sqr();
                (m2 + p, m4 + p * p)
            });
            let (m2, m4) = (m2 / k as f64, m4 / k as f64);
            if m2 > 0.0 {
                m4 / (m2 * m2) - 2.0
            } else {
                0.0
            }
        })
        .collect())
}

/// Spectral-kurtosis selector: positive part of SK, max-normalized.
pub fn spectral_kurtosis_selector(spec: &Spectrogram) -> Result<FilterCharacteristic> {
    let sk = spectral_kurtosis(spec)?;
    let weights = sk.into_iter().map(|v| v.max(0.0)).collect();
    let mut filter =
        FilterCharacteristic::from_weights(weights, spec.bin_freqs(), SelectorSource::Sk).map_err(
            |e| match e {
                Error::AllZeroColumns => {
                    Error::InvalidSignal("no frequency bin has positive spectral kurtosis".into())
                }
                other => other,
            },
        )?;
    filter.column = Some(0);
    Ok(filter)
}

/// Filter a signal by masking its STFT with the characteristic.
pub fn apply_selector(
    signal: &Signal,
    filt: &FilterCharacteristic,
    params: &StftParams,
) -> Result<Signal> {
    let spec = stft(signal, params)?;
    apply_selector_to_spectrogram(&spec, filt)
}

/// As [`apply_selector`], reusing an already computed STFT.
pub fn apply_selector_to_spectrogram(
    spec: &Spectrogram,
    filt: &FilterCharacteristic,
) -> Result<Signal> {
    if filt.weights.len() != spec.n_bins() {
        return Err(Error::DimensionMismatch(format!(
            "filter has {} weights but the STFT has {} bins",
            filt.weights.len(),
            spec.n_bins()
        )));
    }
    if filt.weights.iter().all(|&w| w == 0.0) {
        return Err(Error::AllZeroColumns);
    }
    let mut masked = spec.clone();
    for (mut row, &w) in masked.frames.axis_iter_mut(Axis(0)).zip(&filt.weights) {
        row.mapv_inplace(|z| z * w);
    }
    istft(&masked)
}
