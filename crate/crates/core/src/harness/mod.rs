//! The full detection experiment: rank sweep over seeded trials, kurtosis
//! scoring of every candidate filter, and selection of a representative one.
//!
//! Trial `t` at rank `r` is seeded with `base_seed + r * 1_000_000 + t`, so
//! any single trial can be re-run on its own. Trials run on a rayon pool
//! (size capped by `UNDERBAND_THREADS`) but results are folded in
//! `(rank, trial)` order, which keeps the report independent of scheduling.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{
    init_random, nmf_multiplicative, nmu_global, reconstruction_error, FactorPair, SolverConfig,
};
use crate::metrics::{
    dominant_cyclic_peak, envelope_spectrum, kurtosis, sparsity_fraction, EnvelopeSpectrum,
};
use crate::selectors::{
    apply_selector_to_spectrogram, selectors_from_w, spectral_kurtosis_selector,
    FilterCharacteristic, SelectorMeta, SelectorSource,
};
use crate::signal_io::{
    generate_fault_signal, load_csv, load_wav_channel, FaultSignalSpec, Signal,
};
use crate::tfr::{magnitude, stft, Spectrogram, StftParams};

pub use report::{emit_report, FILES};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "UNDERBAND_THREADS";

/// Relative threshold used for the reported `W` sparsity.
pub const SPARSITY_THRESHOLD: f64 = 1e-3;

const SEED_RANK_STRIDE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nmu,
    Nmf,
    Sk,
}

impl Method {
    fn source(self) -> SelectorSource {
        match self {
            Method::Nmu => SelectorSource::Nmu,
            Method::Nmf => SelectorSource::Nmf,
            Method::Sk => SelectorSource::Sk,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.source().fmt(f)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nmu" => Ok(Method::Nmu),
            "nmf" => Ok(Method::Nmf),
            "sk" => Ok(Method::Sk),
            other => Err(Error::InvalidParameter(format!(
                "unknown method {other:?} (expected nmu, nmf or sk)"
            ))),
        }
    }
}

/// Where the analysed signal comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InputSource {
    /// WAV (by extension) or one-sample-per-line CSV, which needs a rate.
    File {
        path: PathBuf,
        #[serde(default)]
        channel: usize,
        #[serde(default)]
        sample_rate_hz: Option<f64>,
    },
    Synthetic {
        spec: FaultSignalSpec,
        /// Overrides `spec.noise_std` when present.
        #[serde(default)]
        snr_db: Option<f64>,
    },
}

impl InputSource {
    pub fn load(&self) -> Result<Signal> {
        match self {
            InputSource::File {
                path,
                channel,
                sample_rate_hz,
            } => {
                let is_wav = path
                    .extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
                if is_wav {
                    load_wav_channel(path, *channel)
                } else {
                    let rate = sample_rate_hz.ok_or_else(|| {
                        Error::InvalidParameter(format!(
                            "{} is not a WAV file, so a sample rate is required",
                            path.display()
                        ))
                    })?;
                    load_csv(path, rate)
                }
            }
            InputSource::Synthetic { spec, snr_db } => {
                let spec = match snr_db {
                    Some(db) => spec.clone().with_snr_db(*db)?,
                    None => spec.clone(),
                };
                generate_fault_signal(&spec)
            }
        }
    }

    /// Envelope-spectrum search band used when the config leaves it open:
    /// half to one and a half times the fault rate for synthetic input,
    /// otherwise 1 Hz to 1 kHz.
    fn default_envelope_band(&self) -> [f64; 2] {
        match self {
            InputSource::Synthetic { spec, .. } => {
                [0.5 * spec.fault_freq_hz, 1.5 * spec.fault_freq_hz]
            }
            InputSource::File { .. } => [1.0, 1000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub rank_min: usize,
    pub rank_max: usize,
    pub trials: usize,
    pub stft: StftParams,
    pub solver: SolverConfig,
    pub base_seed: u64,
    pub input: InputSource,
    /// `[lo, hi]` in Hz for the envelope-spectrum peak search.
    #[serde(default)]
    pub envelope_band_hz: Option<[f64; 2]>,
    /// Keep the chosen trial's `W` and `V` for dumping.
    #[serde(default)]
    pub dump_factors: bool,
}

impl ExperimentConfig {
    pub fn new(method: Method, input: InputSource) -> Self {
        ExperimentConfig {
            method,
            rank_min: 2,
            rank_max: 15,
            trials: 100,
            stft: StftParams::default(),
            solver: SolverConfig::default(),
            base_seed: 0,
            input,
            envelope_band_hz: None,
            dump_factors: false,
        }
    }

    /// Checks that do not need the spectrogram. SK runs are normalized to a
    /// single trial.
    pub fn validate(&mut self) -> Result<()> {
        self.stft.validate()?;
        self.solver.validate()?;
        if let Some([lo, hi]) = self.envelope_band_hz {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "envelope band [{lo}, {hi}] must satisfy 0 < lo < hi"
                )));
            }
        }
        if self.method == Method::Sk {
            self.trials = 1;
            return Ok(());
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        if self.rank_min < 2 || self.rank_min > self.rank_max {
            return Err(Error::InvalidParameter(format!(
                "rank range [{}, {}] must satisfy 2 <= rank_min <= rank_max",
                self.rank_min, self.rank_max
            )));
        }
        Ok(())
    }

    pub fn ranks(&self) -> Vec<usize> {
        match self.method {
            Method::Sk => vec![1],
            _ => (self.rank_min..=self.rank_max).collect(),
        }
    }

    pub fn trial_seed(&self, rank: usize, trial: usize) -> u64 {
        self.base_seed
            .wrapping_add((rank as u64).wrapping_mul(SEED_RANK_STRIDE))
            .wrapping_add(trial as u64)
    }
}

/// Scores of one factorization (or of the single SK filter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub rank: usize,
    pub trial: usize,
    pub seed: u64,
    pub best_column: usize,
    pub best_kurtosis: f64,
    /// Kurtosis of every surviving column's filtered signal, by column.
    pub column_kurtosis: Vec<Option<f64>>,
    /// `max(WV - S)`; NMU only.
    pub violation: Option<f64>,
    /// `||S - WV||_F^2`; not defined for SK.
    pub residual: Option<f64>,
    pub w_sparsity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub rank: usize,
    pub mean_kurtosis: f64,
    /// Population standard deviation over trials; absent for SK.
    pub std_kurtosis: Option<f64>,
    pub representative_trial: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenFilter {
    pub rank: usize,
    pub trial: usize,
    pub column: usize,
    pub seed: u64,
    /// Kurtosis of the filtered signal.
    pub kurtosis: f64,
    pub filter_peak_hz: f64,
    pub filter_csv: String,
    pub filtered_signal: String,
    pub envelope_csv: String,
    pub envelope_peak_hz: f64,
    pub envelope_peak_amplitude: f64,
    pub envelope_band_hz: [f64; 2],
    #[serde(default)]
    pub factors_w_csv: Option<String>,
    #[serde(default)]
    pub factors_v_csv: Option<String>,
}

/// Everything written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub method: Method,
    pub raw_kurtosis: f64,
    pub ranks: Vec<RankSummary>,
    pub chosen: ChosenFilter,
    pub trials: Vec<TrialResult>,
    pub versions: BTreeMap<String, String>,
}

/// Bulk data behind the report's file references.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub filter: FilterCharacteristic,
    pub filtered_signal: Signal,
    pub envelope: EnvelopeSpectrum,
    pub factors: Option<FactorPair>,
    pub bin_freqs_hz: Vec<f64>,
    pub frame_times_s: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub report: Report,
    pub artifacts: Artifacts,
}

/// The signal's STFT and magnitude, shared read-only by all trials.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub signal: Signal,
    pub spectrogram: Spectrogram,
    pub magnitude: Array2<f64>,
    pub bin_freqs_hz: Vec<f64>,
}

impl Prepared {
    pub fn new(signal: Signal, params: &StftParams) -> Result<Self> {
        let spectrogram = stft(&signal, params)?;
        let magnitude = magnitude(&spectrogram);
        let bin_freqs_hz = spectrogram.bin_freqs();
        Ok(Prepared {
            signal,
            spectrogram,
            magnitude,
            bin_freqs_hz,
        })
    }
}

/// Full output of one trial, kept only for the chosen one.
struct TrialDetail {
    result: TrialResult,
    filters: Vec<FilterCharacteristic>,
    factors: Option<FactorPair>,
}

fn run_trial_detail(
    ctx: &Prepared,
    cfg: &ExperimentConfig,
    rank: usize,
    trial: usize,
) -> Result<TrialDetail> {
    let seed = cfg.trial_seed(rank, trial);
    let s = ctx.magnitude.view();
    let meta = SelectorMeta {
        source: cfg.method.source(),
        rank: Some(rank),
        trial: Some(trial),
    };
    let (filters, factors, violation, residual) = match cfg.method {
        Method::Sk => {
            let mut filter = spectral_kurtosis_selector(&ctx.spectrogram)?;
            filter.rank = Some(rank);
            filter.trial = Some(trial);
            (vec![filter], None, None, None)
        }
        Method::Nmu | Method::Nmf => {
            let init = init_random(s.nrows(), s.ncols(), rank, seed, cfg.solver.init_scale)?;
            let solver = SolverConfig {
                rng_seed: seed,
                ..cfg.solver.clone()
            };
            let (pair, violation) = if cfg.method == Method::Nmu {
                let state = nmu_global(s, init, &solver)?;
                (state.factors, Some(state.violation))
            } else {
                (nmf_multiplicative(s, init, &solver)?, None)
            };
            let residual = reconstruction_error(s, &pair)?;
            let (filters, _) = selectors_from_w(pair.w.view(), &ctx.bin_freqs_hz, meta)?;
            (filters, Some(pair), violation, Some(residual))
        }
    };
    if filters.is_empty() {
        return Err(Error::AllZeroColumns);
    }

    let width = factors.as_ref().map_or(1, |p| p.rank());
    let mut column_kurtosis = vec![None; width];
    let mut best: Option<(usize, f64)> = None;
    for filter in &filters {
        let column = filter.column.unwrap_or(0);
        let out = apply_selector_to_spectrogram(&ctx.spectrogram, filter)?;
        let k = kurtosis(out.samples())?;
        column_kurtosis[column] = Some(k);
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((column, k));
        }
    }
    let (best_column, best_kurtosis) = best.expect("at least one filter");
    let w_sparsity = factors
        .as_ref()
        .map(|p| sparsity_fraction(p.w.view(), SPARSITY_THRESHOLD));
    Ok(TrialDetail {
        result: TrialResult {
            rank,
            trial,
            seed,
            best_column,
            best_kurtosis,
            column_kurtosis,
            violation,
            residual,
            w_sparsity,
        },
        filters,
        factors,
    })
}

/// Factorize (or compute SK), filter with every column and score each output.
pub fn run_trial(
    ctx: &Prepared,
    cfg: &ExperimentConfig,
    rank: usize,
    trial: usize,
) -> Result<TrialResult> {
    run_trial_detail(ctx, cfg, rank, trial)
        .map(|d| d.result)
        .map_err(|e| Error::Trial {
            rank,
            trial,
            source: Box::new(e),
        })
}

/// Index of the trial whose best kurtosis is closest to the mean (lowest
/// index on ties).
pub fn select_representative(results: &[TrialResult]) -> Result<usize> {
    let values: Vec<f64> = results.iter().map(|r| r.best_kurtosis).collect();
    closest_to_mean(&values)
}

fn closest_to_mean(values: &[f64]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::Empty("no trials to choose from".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - mean).abs() < (values[best] - mean).abs() {
            best = i;
        }
    }
    Ok(best)
}

/// Per-rank statistics for results grouped by rank in ascending order.
pub fn summarize(results: &[TrialResult], method: Method) -> Result<Vec<RankSummary>> {
    let mut summaries = Vec::new();
    for group in results.chunk_by(|a, b| a.rank == b.rank) {
        let values: Vec<f64> = group.iter().map(|r| r.best_kurtosis).collect();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        summaries.push(RankSummary {
            rank: group[0].rank,
            mean_kurtosis: mean,
            std_kurtosis: (method != Method::Sk).then(|| var.sqrt()),
            representative_trial: group[closest_to_mean(&values)?].trial,
        });
    }
    Ok(summaries)
}

/// Rank with the highest mean kurtosis (lowest rank on ties).
pub fn choose_rank(summaries: &[RankSummary]) -> Result<&RankSummary> {
    let mut best: Option<&RankSummary> = None;
    for s in summaries {
        if best.is_none_or(|b| s.mean_kurtosis > b.mean_kurtosis) {
            best = Some(s);
        }
    }
    best.ok_or_else(|| Error::Empty("no ranks were evaluated".into()))
}

/// Worker count from `UNDERBAND_THREADS`, or `None` for rayon's default.
pub fn thread_limit() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::InvalidParameter(format!(
                "{THREADS_ENV} must be a positive integer, got {text:?}"
            ))),
        },
    }
}

/// Load the configured input and run the sweep on it.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let signal = cfg.input.load()?;
    rank_sweep(signal, cfg)
}

/// All trials at all ranks, then the representative filter of the best rank.
/// Worker count follows `UNDERBAND_THREADS`.
pub fn rank_sweep(signal: Signal, cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    rank_sweep_with_threads(signal, cfg, thread_limit()?)
}

/// As [`rank_sweep`] with an explicit worker count (`None`: one per core).
pub fn rank_sweep_with_threads(
    signal: Signal,
    cfg: &ExperimentConfig,
    threads: Option<usize>,
) -> Result<SweepOutcome> {
    let mut cfg = cfg.clone();
    cfg.validate()?;
    let ctx = Prepared::new(signal, &cfg.stft)?;
    let (rows, cols) = ctx.magnitude.dim();
    if cfg.method != Method::Sk && cfg.rank_max >= rows.min(cols) {
        return Err(Error::RankOutOfRange {
            rank: cfg.rank_max,
            rows,
            cols,
        });
    }
    let band = cfg
        .envelope_band_hz
        .unwrap_or_else(|| cfg.input.default_envelope_band());

    let jobs: Vec<(usize, usize)> = cfg
        .ranks()
        .into_iter()
        .flat_map(|r| (0..cfg.trials).map(move |t| (r, t)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    // `collect` on an indexed parallel iterator keeps job order.
    let results: Vec<TrialResult> = pool.install(|| {
        jobs.par_iter()
            .map(|&(rank, trial)| run_trial(&ctx, &cfg, rank, trial))
            .collect::<Result<Vec<_>>>()
    })?;

    let summaries = summarize(&results, cfg.method)?;
    let chosen = choose_rank(&summaries)?.clone();
    let detail =
        run_trial_detail(&ctx, &cfg, chosen.rank, chosen.representative_trial).map_err(|e| {
            Error::Trial {
                rank: chosen.rank,
                trial: chosen.representative_trial,
                source: Box::new(e),
            }
        })?;
    let column = detail.result.best_column;
    let filter = detail
        .filters
        .iter()
        .find(|f| f.column.unwrap_or(0) == column)
        .cloned()
        .expect("best column has a filter");
    let filtered_signal = apply_selector_to_spectrogram(&ctx.spectrogram, &filter)?;
    let envelope = envelope_spectrum(&filtered_signal)?;
    let nyquist = *envelope.freqs_hz.last().expect("non-empty spectrum");
    let search = [band[0].max(envelope.resolution_hz), band[1].min(nyquist)];
    let (envelope_peak_hz, envelope_peak_amplitude) =
        dominant_cyclic_peak(&envelope, search[0], search[1])?;

    let dump = cfg.dump_factors && detail.factors.is_some();
    let report = Report {
        method: cfg.method,
        raw_kurtosis: kurtosis(ctx.signal.samples())?,
        ranks: summaries,
        chosen: ChosenFilter {
            rank: chosen.rank,
            trial: chosen.representative_trial,
            column,
            seed: detail.result.seed,
            kurtosis: detail.result.best_kurtosis,
            filter_peak_hz: filter.peak_frequency_hz(),
            filter_csv: FILES.filter.into(),
            filtered_signal: FILES.filtered_signal.into(),
            envelope_csv: FILES.envelope.into(),
            envelope_peak_hz,
            envelope_peak_amplitude,
            envelope_band_hz: search,
            factors_w_csv: dump.then(|| FILES.factors_w.into()),
            factors_v_csv: dump.then(|| FILES.factors_v.into()),
        },
        trials: results,
        versions: BTreeMap::from([(
            "underband".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        )]),
        config: cfg,
    };
    Ok(SweepOutcome {
        report,
        artifacts: Artifacts {
            filter,
            filtered_signal,
            envelope,
            factors: if dump { detail.factors } else { None },
            bin_freqs_hz: ctx.bin_freqs_hz.clone(),
            frame_times_s: ctx.spectrogram.frame_times(),
        },
    })
}
