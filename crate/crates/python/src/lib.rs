//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use underband::factorize::{self, FactorPair, SolverConfig};
use underband::harness::{self, ExperimentConfig, InputSource, Method};
use underband::signal_io::{self, FaultSignalSpec};
use underband::tfr::{self, StftParams};
use underband::{metrics, selectors, Error};

fn to_py(e: Error) -> PyErr {
    match &e {
        Error::Io { .. } | Error::UnreadableFile { .. } => PyOSError::new_err(e.to_string()),
        _ if e.is_config_error() => PyValueError::new_err(e.to_string()),
        Error::DimensionMismatch(_)
        | Error::InvalidSignal(_)
        | Error::NegativeInput
        | Error::Empty(_)
        | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(PyValueError::new_err(
            "matrix rows must all have the same length",
        ));
    }
    Array2::from_shape_vec((n_rows, n_cols), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn from_matrix(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// `(W, V)` as lists of rows.
type Factors = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn params(window: usize, overlap: usize, nfft: usize) -> PyResult<StftParams> {
    StftParams::new(window, overlap, nfft).map_err(to_py)
}

fn solver(seed: u64, max_iters: usize) -> SolverConfig {
    SolverConfig {
        rng_seed: seed,
        max_outer_iters: max_iters,
        ..SolverConfig::default()
    }
}

/// A sampled real signal.
#[pyclass(name = "Signal", module = "underband", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySignal {
    inner: underband::Signal,
}

#[pymethods]
impl PySignal {
    #[new]
    fn new(samples: Vec<f64>, sample_rate_hz: f64) -> PyResult<Self> {
        let inner = underband::Signal::new(samples, sample_rate_hz).map_err(to_py)?;
        Ok(PySignal { inner })
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    #[getter]
    fn sample_rate_hz(&self) -> f64 {
        self.inner.sample_rate_hz()
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.duration_s()
    }

    fn kurtosis(&self) -> PyResult<f64> {
        metrics::kurtosis(self.inner.samples()).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Signal({} samples at {} Hz)",
            self.inner.len(),
            self.inner.sample_rate_hz()
        )
    }
}

/// Load a WAV file, or a one-sample-per-line CSV (which needs the rate).
#[pyfunction]
#[pyo3(signature = (path, sample_rate_hz=None, channel=0))]
fn load_signal(path: PathBuf, sample_rate_hz: Option<f64>, channel: usize) -> PyResult<PySignal> {
    let source = InputSource::File {
        path,
        channel,
        sample_rate_hz,
    };
    Ok(PySignal {
        inner: source.load().map_err(to_py)?,
    })
}

/// Synthetic bearing-fault signal from the `vibration` or `idler` preset.
#[pyfunction]
#[pyo3(signature = (preset="vibration", seed=0, snr_db=None))]
fn synthetic_signal(preset: &str, seed: u64, snr_db: Option<f64>) -> PyResult<PySignal> {
    let mut spec = match preset {
        "vibration" => FaultSignalSpec::vibration(),
        "idler" => FaultSignalSpec::idler(),
        other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
    };
    spec.rng_seed = seed;
    if let Some(db) = snr_db {
        spec = spec.with_snr_db(db).map_err(to_py)?;
    }
    let inner = signal_io::generate_fault_signal(&spec).map_err(to_py)?;
    Ok(PySignal { inner })
}

/// STFT magnitude as an `n_bins x n_frames` list of rows.
#[pyfunction]
#[pyo3(signature = (signal, window=128, overlap=100, nfft=512))]
fn spectrogram(
    signal: &PySignal,
    window: usize,
    overlap: usize,
    nfft: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let spec = tfr::stft(&signal.inner, &params(window, overlap, nfft)?).map_err(to_py)?;
    Ok(from_matrix(&tfr::magnitude(&spec)))
}

/// Bin centre frequencies in Hz.
#[pyfunction]
#[pyo3(signature = (sample_rate_hz, window=128, overlap=100, nfft=512))]
fn bin_frequencies(
    sample_rate_hz: f64,
    window: usize,
    overlap: usize,
    nfft: usize,
) -> PyResult<Vec<f64>> {
    Ok(tfr::bin_frequencies(
        &params(window, overlap, nfft)?,
        sample_rate_hz,
    ))
}

/// Euclidean NMF from a seeded random start; returns `(W, V)`.
#[pyfunction]
#[pyo3(signature = (s, rank, seed=0, max_iters=500))]
fn nmf(s: Vec<Vec<f64>>, rank: usize, seed: u64, max_iters: usize) -> PyResult<Factors> {
    let s = to_matrix(s)?;
    let init = factorize::init_random(s.nrows(), s.ncols(), rank, seed, 1.0).map_err(to_py)?;
    let FactorPair { w, v } =
        factorize::nmf_multiplicative(s.view(), init, &solver(seed, max_iters)).map_err(to_py)?;
    Ok((from_matrix(&w), from_matrix(&v)))
}

/// Global NMU from a seeded random start; returns
/// `(W, V, violation, squared_residual)`.
#[pyfunction]
#[pyo3(signature = (s, rank, seed=0, max_iters=500))]
#[allow(clippy::type_complexity)]
fn nmu(
    s: Vec<Vec<f64>>,
    rank: usize,
    seed: u64,
    max_iters: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>, f64, f64)> {
    let s = to_matrix(s)?;
    let init = factorize::init_random(s.nrows(), s.ncols(), rank, seed, 1.0).map_err(to_py)?;
    let state = factorize::nmu_global(s.view(), init, &solver(seed, max_iters)).map_err(to_py)?;
    Ok((
        from_matrix(&state.factors.w),
        from_matrix(&state.factors.v),
        state.violation,
        state.residual,
    ))
}

/// Recursive (deflation) NMU; returns `(W, V)`.
#[pyfunction]
#[pyo3(signature = (s, rank, seed=0, max_iters=500))]
fn nmu_recursive(s: Vec<Vec<f64>>, rank: usize, seed: u64, max_iters: usize) -> PyResult<Factors> {
    let s = to_matrix(s)?;
    let FactorPair { w, v } =
        factorize::nmu_recursive(s.view(), rank, &solver(seed, max_iters)).map_err(to_py)?;
    Ok((from_matrix(&w), from_matrix(&v)))
}

/// Raw kurtosis `m4 / m2^2` (3 for a Gaussian).
#[pyfunction]
fn kurtosis(x: Vec<f64>) -> PyResult<f64> {
    metrics::kurtosis(&x).map_err(to_py)
}

/// Fraction of entries below `rel_threshold * max|m|`.
#[pyfunction]
#[pyo3(signature = (m, rel_threshold=1e-3))]
fn sparsity(m: Vec<Vec<f64>>, rel_threshold: f64) -> PyResult<f64> {
    Ok(metrics::sparsity_fraction(
        to_matrix(m)?.view(),
        rel_threshold,
    ))
}

/// Per-bin spectral kurtosis of the signal's STFT.
#[pyfunction]
#[pyo3(signature = (signal, window=128, overlap=100, nfft=512))]
fn spectral_kurtosis(
    signal: &PySignal,
    window: usize,
    overlap: usize,
    nfft: usize,
) -> PyResult<Vec<f64>> {
    let spec = tfr::stft(&signal.inner, &params(window, overlap, nfft)?).map_err(to_py)?;
    selectors::spectral_kurtosis(&spec).map_err(to_py)
}

/// Mask the signal's STFT with per-bin `weights` and resynthesize.
#[pyfunction]
#[pyo3(signature = (signal, weights, window=128, overlap=100, nfft=512))]
fn filter_signal(
    signal: &PySignal,
    weights: Vec<f64>,
    window: usize,
    overlap: usize,
    nfft: usize,
) -> PyResult<PySignal> {
    let params = params(window, overlap, nfft)?;
    let freqs = tfr::bin_frequencies(&params, signal.inner.sample_rate_hz());
    let filter = selectors::FilterCharacteristic::from_weights(
        weights,
        freqs,
        selectors::SelectorSource::Custom,
    )
    .map_err(to_py)?;
    let inner = selectors::apply_selector(&signal.inner, &filter, &params).map_err(to_py)?;
    Ok(PySignal { inner })
}

/// Envelope spectrum as `(frequencies_hz, amplitudes)`.
#[pyfunction]
fn envelope_spectrum(signal: &PySignal) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let es = metrics::envelope_spectrum(&signal.inner).map_err(to_py)?;
    Ok((es.freqs_hz, es.amplitudes))
}

/// Run the full rank sweep and return `report.json` as a string; with
/// `out`, also write every artifact there.
#[pyfunction]
#[pyo3(signature = (
    method="nmu", input=None, sample_rate_hz=None, channel=0, preset="vibration", signal_seed=0,
    snr_db=None, rank_min=2, rank_max=15, trials=100, seed=0, max_iters=500, out=None
))]
#[allow(clippy::too_many_arguments)]
fn detect(
    py: Python<'_>,
    method: &str,
    input: Option<PathBuf>,
    sample_rate_hz: Option<f64>,
    channel: usize,
    preset: &str,
    signal_seed: u64,
    snr_db: Option<f64>,
    rank_min: usize,
    rank_max: usize,
    trials: usize,
    seed: u64,
    max_iters: usize,
    out: Option<PathBuf>,
) -> PyResult<String> {
    let method: Method = method.parse().map_err(to_py)?;
    let source = match input {
        Some(path) => InputSource::File {
            path,
            channel,
            sample_rate_hz,
        },
        None => {
            let mut spec = match preset {
                "vibration" => FaultSignalSpec::vibration(),
                "idler" => FaultSignalSpec::idler(),
                other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
            };
            spec.rng_seed = signal_seed;
            InputSource::Synthetic { spec, snr_db }
        }
    };
    let mut cfg = ExperimentConfig::new(method, source);
    cfg.rank_min = rank_min;
    cfg.rank_max = rank_max;
    cfg.trials = trials;
    cfg.base_seed = seed;
    cfg.solver.max_outer_iters = max_iters;
    let outcome = py
        .detach(|| {
            let outcome = harness::run_experiment(&cfg)?;
            if let Some(dir) = &out {
                harness::emit_report(&outcome, dir)?;
            }
            Ok::<_, Error>(outcome)
        })
        .map_err(to_py)?;
    serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
#[pyo3(name = "underband")]
fn underband_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySignal>()?;
    m.add_function(wrap_pyfunction!(load_signal, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_signal, m)?)?;
    m.add_function(wrap_pyfunction!(spectrogram, m)?)?;
    m.add_function(wrap_pyfunction!(bin_frequencies, m)?)?;
    m.add_function(wrap_pyfunction!(nmf, m)?)?;
    m.add_function(wrap_pyfunction!(nmu, m)?)?;
    m.add_function(wrap_pyfunction!(nmu_recursive, m)?)?;
    m.add_function(wrap_pyfunction!(kurtosis, m)?)?;
    m.add_function(wrap_pyfunction!(sparsity, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_kurtosis, m)?)?;
    m.add_function(wrap_pyfunction!(filter_signal, m)?)?;
    m.add_function(wrap_pyfunction!(envelope_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    Ok(())
}
