use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use underband::harness::{
    emit_report, run_experiment, ExperimentConfig, InputSource, Method, FILES,
};
use underband::signal_io::FaultSignalSpec;
use underband::tfr::StftParams;
use underband::Error;

#[derive(Parser)]
#[command(
    name = "underband",
    version,
    about = "Informative frequency band detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep factorization ranks and trials, then report the most impulsive band.
    Detect(DetectArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["input", "synthetic"])))]
struct DetectArgs {
    /// Signal file: WAV, or CSV with one sample per line (needs --sample-rate).
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON synthetic-signal spec; unspecified fields take the vibration preset.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long, default_value = "nmu")]
    method: String,
    #[arg(long, default_value_t = 2)]
    rank_min: usize,
    #[arg(long, default_value_t = 15)]
    rank_max: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    window: usize,
    #[arg(long, default_value_t = 100)]
    overlap: usize,
    #[arg(long, default_value_t = 512)]
    nfft: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the chosen trial's W and V.
    #[arg(long)]
    dump_factors: bool,
    /// WAV channel to analyse.
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Sample rate for CSV input, Hz.
    #[arg(long)]
    sample_rate: Option<f64>,
    /// Outer iteration cap for the factorizations.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Envelope-spectrum peak search band, Hz.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    envelope_band: Option<Vec<f64>>,
}

/// `--synthetic` file contents: a signal spec plus an optional target SNR.
#[derive(Deserialize)]
struct SyntheticFile {
    #[serde(flatten)]
    spec: FaultSignalSpec,
    #[serde(default)]
    snr_db: Option<f64>,
}

fn build_config(args: &DetectArgs) -> underband::Result<ExperimentConfig> {
    let method: Method = args.method.parse()?;
    let input = match (&args.input, &args.synthetic) {
        (Some(path), None) => InputSource::File {
            path: path.clone(),
            channel: args.channel,
            sample_rate_hz: args.sample_rate,
        },
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::UnreadableFile {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            let file: SyntheticFile = serde_json::from_str(&text)?;
            InputSource::Synthetic {
                spec: file.spec,
                snr_db: file.snr_db,
            }
        }
        _ => unreachable!("clap enforces exactly one source"),
    };
    let mut cfg = ExperimentConfig::new(method, input);
    cfg.rank_min = args.rank_min;
    cfg.rank_max = args.rank_max;
    cfg.trials = args.trials;
    cfg.base_seed = args.seed;
    cfg.stft = StftParams::new(args.window, args.overlap, args.nfft)?;
    cfg.dump_factors = args.dump_factors;
    if let Some(n) = args.max_iters {
        cfg.solver.max_outer_iters = n;
    }
    if let Some(band) = &args.envelope_band {
        cfg.envelope_band_hz = Some([band[0], band[1]]);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn detect(args: &DetectArgs) -> underband::Result<()> {
    let cfg = build_config(args)?;
    let outcome = run_experiment(&cfg)?;
    emit_report(&outcome, &args.out)?;
    let chosen = &outcome.report.chosen;
    println!(
        "method {} rank {} trial {} column {}: kurtosis {:.4} (raw {:.4}), band peak {:.1} Hz, envelope peak {:.2} Hz",
        outcome.report.method,
        chosen.rank,
        chosen.trial,
        chosen.column,
        chosen.kurtosis,
        outcome.report.raw_kurtosis,
        chosen.filter_peak_hz,
        chosen.envelope_peak_hz
    );
    println!("wrote {}", args.out.join(FILES.report).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::Detect(args) => detect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(if e.is_config_error() { 1 } else { 2 })
        }
    }
}
