//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! straight to stdout (bypassing capture) and then asserts.

use std::io::Write;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use underband::factorize::{
    init_random, nmf_multiplicative, nmf_multiplicative_traced, nmu_global, reconstruction_error,
    SolverConfig,
};
use underband::harness::{
    rank_sweep_with_threads, ExperimentConfig, InputSource, Method, SweepOutcome,
};
use underband::metrics::{kurtosis, sparsity_fraction};
use underband::signal_io::{generate_fault_signal, FaultSignalSpec, Signal};
use underband::tfr::{istft, magnitude, stft, StftParams};

fn report(id: u32, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance criterion {id}: {verdict} | {detail}").unwrap();
}

fn random_matrices() -> Vec<Array2<f64>> {
    (0..20)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            Array2::from_shape_simple_fn((64, 64), || rng.random::<f64>())
        })
        .collect()
}

#[test]
fn criterion_1_stft_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..50_000)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0)
        .collect();
    let signal = Signal::new(x.clone(), 50_000.0).unwrap();
    let params = StftParams::new(128, 100, 512).unwrap();
    let start = Instant::now();
    let y = istft(&stft(&signal, &params).unwrap()).unwrap();
    let elapsed = start.elapsed();
    let (mut err, mut norm) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y.samples()).skip(128).take(x.len() - 256) {
        err += (b - a).powi(2);
        norm += a * a;
    }
    let rel = (err / norm).sqrt();
    let pass = rel <= 1e-8 && elapsed < Duration::from_secs(1);
    report(
        1,
        pass,
        format!("interior relative L2 error {rel:.3e} (<= 1e-8), runtime {elapsed:.2?} (< 1 s)"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_nmf_monotonicity() {
    let cfg = SolverConfig::default();
    let mut worst = f64::NEG_INFINITY;
    let mut runs = 0;
    for (m, s) in random_matrices().iter().enumerate() {
        for rank in [2, 5] {
            let init = init_random(64, 64, rank, m as u64, 1.0).unwrap();
            let run = nmf_multiplicative_traced(s.view(), init, &cfg).unwrap();
            let slack = 1e-12 * run.objective[0];
            for pair in run.objective.windows(2) {
                worst = worst.max((pair[1] - pair[0]) / slack);
            }
            runs += 1;
        }
    }
    let pass = worst <= 1.0;
    report(
        2,
        pass,
        format!("{runs} runs, largest objective increase {worst:.3e} x slack (<= 1)"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_nmu_feasibility() {
    let cfg = SolverConfig::default();
    let mut worst = f64::NEG_INFINITY;
    let mut nonnegative = true;
    for (m, s) in random_matrices().iter().enumerate() {
        let smax = s.iter().cloned().fold(0.0, f64::max);
        for rank in [2, 5] {
            let init = init_random(64, 64, rank, m as u64, 1.0).unwrap();
            let state = nmu_global(s.view(), init, &cfg).unwrap();
            worst = worst.max(state.violation / smax);
            nonnegative &= state.factors.w.iter().all(|&x| x >= 0.0)
                && state.factors.v.iter().all(|&x| x >= 0.0)
                && state.lambda.iter().all(|&x| x >= 0.0);
        }
    }
    let pass = worst <= 0.01 && nonnegative;
    report(
        3,
        pass,
        format!("max violation / max(S) = {worst:.3e} (<= 0.01), W, V, Lambda non-negative: {nonnegative}"),
    );
    assert!(pass);
}

/// Best feasible rank-one fit to a 2x2 matrix by exhaustive search over
/// `w, v in [0, 1.5]^2` with step 0.01.
fn grid_oracle(s: [[f64; 2]; 2]) -> f64 {
    let grid: Vec<f64> = (0..=150).map(|i| i as f64 * 0.01).collect();
    let mut best = f64::INFINITY;
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                for &d in &grid {
                    let p = [[a * c, a * d], [b * c, b * d]];
                    if (0..2).any(|i| (0..2).any(|k| p[i][k] > s[i][k] + 1e-12)) {
                        continue;
                    }
                    let err = (0..2)
                        .flat_map(|i| (0..2).map(move |k| (i, k)))
                        .map(|(i, k)| (s[i][k] - p[i][k]).powi(2))
                        .sum::<f64>();
                    best = best.min(err);
                }
            }
        }
    }
    best
}

#[test]
fn criterion_4_nmu_identity_oracle() {
    let oracle = grid_oracle([[1.0, 0.0], [0.0, 1.0]]);
    let eye = ndarray::array![[1.0, 0.0], [0.0, 1.0]];
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let init = init_random(2, 2, 1, seed, 1.0).unwrap();
        let state = nmu_global(eye.view(), init, &SolverConfig::default()).unwrap();
        let residual = reconstruction_error(eye.view(), &state.factors).unwrap();
        worst = worst
            .max((residual - oracle).abs())
            .max((residual - 1.0).abs());
    }
    let pass = worst <= 1e-2;
    report(
        4,
        pass,
        format!("grid oracle {oracle:.4}, largest deviation over 20 seeds {worst:.3e} (<= 1e-2)"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_sparsity_ordering() {
    let cfg = SolverConfig::default();
    let params = StftParams::default();
    let (mut nmu_sum, mut nmf_sum) = (0.0, 0.0);
    let n = 20;
    for seed in 0..n {
        let spec = FaultSignalSpec {
            rng_seed: seed,
            ..FaultSignalSpec::default()
        };
        let s = magnitude(&stft(&generate_fault_signal(&spec).unwrap(), &params).unwrap());
        let init = init_random(s.nrows(), s.ncols(), 5, seed, 1.0).unwrap();
        let nmu = nmu_global(s.view(), init.clone(), &cfg).unwrap();
        let nmf = nmf_multiplicative(s.view(), init, &cfg).unwrap();
        nmu_sum += sparsity_fraction(nmu.factors.w.view(), 1e-3);
        nmf_sum += sparsity_fraction(nmf.w.view(), 1e-3);
    }
    let (nmu_mean, nmf_mean) = (nmu_sum / n as f64, nmf_sum / n as f64);
    let pass = nmu_mean > nmf_mean;
    report(
        5,
        pass,
        format!("mean W sparsity at 1e-3: NMU {nmu_mean:.4} vs NMF {nmf_mean:.4} (need NMU > NMF)"),
    );
    assert!(pass);
}

fn vibration_config(method: Method) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        method,
        InputSource::Synthetic {
            spec: FaultSignalSpec::vibration(),
            snr_db: None,
        },
    );
    cfg.rank_min = 2;
    cfg.rank_max = 5;
    cfg.trials = 20;
    cfg
}

fn timed_sweep(cfg: &ExperimentConfig) -> (SweepOutcome, Duration) {
    let signal = cfg.input.load().unwrap();
    let start = Instant::now();
    let outcome = rank_sweep_with_threads(signal, cfg, Some(1)).unwrap();
    (outcome, start.elapsed())
}

fn vibration_nmu() -> &'static (SweepOutcome, Duration) {
    static RUN: OnceLock<(SweepOutcome, Duration)> = OnceLock::new();
    RUN.get_or_init(|| timed_sweep(&vibration_config(Method::Nmu)))
}

fn best_mean(outcome: &SweepOutcome) -> f64 {
    outcome
        .report
        .ranks
        .iter()
        .map(|r| r.mean_kurtosis)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_6_kurtosis_ordering() {
    let (nmu, nmu_time) = vibration_nmu();
    let (nmf, nmf_time) = timed_sweep(&vibration_config(Method::Nmf));
    let (sk, sk_time) = timed_sweep(&vibration_config(Method::Sk));
    let total = *nmu_time + nmf_time + sk_time;
    let raw = nmu.report.raw_kurtosis;
    let (k_nmu, k_nmf) = (best_mean(nmu), best_mean(&nmf));
    let pass = k_nmu > k_nmf && k_nmf > raw && total < Duration::from_secs(600);
    report(
        6,
        pass,
        format!(
            "mean best kurtosis NMU {k_nmu:.3} (rank {}), NMF {k_nmf:.3} (rank {}), raw {raw:.3} (need NMU > NMF > raw); SK {:.3}; single-threaded runtime {total:.1?} (< 600 s)",
            nmu.report.chosen.rank, nmf.report.chosen.rank, sk.report.chosen.kurtosis
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_envelope_peaks() {
    let (vib, _) = vibration_nmu();
    let vib_peak = vib.report.chosen.envelope_peak_hz;
    let band = vib.report.chosen.filter_peak_hz;

    let mut idler_cfg = vibration_config(Method::Nmu);
    idler_cfg.input = InputSource::Synthetic {
        spec: FaultSignalSpec::idler(),
        snr_db: None,
    };
    idler_cfg.trials = 5;
    let (idler, _) = timed_sweep(&idler_cfg);
    let idler_peak = idler.report.chosen.envelope_peak_hz;

    let pass = (vib_peak - 91.5).abs() <= 1.0
        && (idler_peak - 5.5).abs() <= 0.5
        && (band - 20_000.0).abs() <= 2_000.0;
    report(
        7,
        pass,
        format!(
            "vibration envelope peak {vib_peak:.2} Hz (91.5 +- 1), filter peak {band:.0} Hz (20 kHz +- 2 kHz); idler envelope peak {idler_peak:.2} Hz (5.5 +- 0.5)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_kurtosis_estimator() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let gauss: Vec<f64> = (0..1_000_000)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let k_gauss = kurtosis(&gauss).unwrap();
    let k_hot = kurtosis(&[0.0, 0.0, 0.0, 10.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    let mut worst_scale: f64 = 0.0;
    for a in [1e-6, 0.37, -2.0, 1e3, 4e7] {
        let scaled: Vec<f64> = gauss.iter().map(|x| a * x).collect();
        worst_scale = worst_scale.max((kurtosis(&scaled).unwrap() - k_gauss).abs() / k_gauss);
    }
    let pass =
        (k_gauss - 3.0).abs() <= 0.05 && (k_hot - 43.0 / 7.0).abs() <= 1e-12 && worst_scale <= 1e-9;
    report(
        8,
        pass,
        format!(
            "Gaussian {k_gauss:.4} (3 +- 0.05), one-hot error {:.1e} (<= 1e-12), scale change {worst_scale:.1e} (<= 1e-9)",
            (k_hot - 43.0 / 7.0).abs()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, r#"{"rng_seed": 3, "snr_db": -5.0}"#).unwrap();
    let run = |threads: &str, out: &str| {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_underband"))
            .env("UNDERBAND_THREADS", threads)
            .args(["detect", "--synthetic"])
            .arg(&spec_path)
            .args([
                "--method",
                "nmu",
                "--rank-min",
                "2",
                "--rank-max",
                "4",
                "--trials",
                "3",
                "--seed",
                "11",
            ])
            .args(["--max-iters", "150", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        std::fs::read(out.join("report.json")).unwrap()
    };
    let one = run("1", "one");
    let eight = run("8", "eight");
    let pass = one == eight;
    report(
        9,
        pass,
        format!(
            "report.json with 1 and 8 threads: {} bytes each, identical: {pass}",
            one.len()
        ),
    );
    assert!(pass);
}
