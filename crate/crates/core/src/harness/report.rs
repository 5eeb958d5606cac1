use std::fs;
use std::path::Path;

use ndarray::ArrayView2;

use super::SweepOutcome;
use crate::error::{Error, Result};
use crate::metrics::write_envelope_csv;
use crate::signal_io::{format_f64, save_signal, write_atomically, SignalFormat};

/// File names written inside the output directory.
pub struct FileNames {
    pub report: &'static str,
    pub summary: &'static str,
    pub filter: &'static str,
    pub filtered_signal: &'static str,
    pub envelope: &'static str,
    pub factors_w: &'static str,
    pub factors_v: &'static str,
}

pub const FILES: FileNames = FileNames {
    report: "report.json",
    summary: "summary.csv",
    filter: "filter.csv",
    filtered_signal: "filtered_signal.csv",
    envelope: "envelope.csv",
    factors_w: "factors_w.csv",
    factors_v: "factors_v.csv",
};

/// Write the report and its artifacts into `dir`, replacing earlier files.
pub fn emit_report(outcome: &SweepOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = &outcome.report;
    let art = &outcome.artifacts;

    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write_atomically(&dir.join(FILES.report), json.as_bytes())?;

    let mut summary = String::from("method,rank,mean_kurtosis,std_kurtosis,representative_trial\n");
    for r in &report.ranks {
        summary.push_str(&format!(
            "{},{},{},{},{}\n",
            report.method,
            r.rank,
            format_f64(r.mean_kurtosis),
            r.std_kurtosis.map(format_f64).unwrap_or_default(),
            r.representative_trial
        ));
    }
    write_atomically(&dir.join(FILES.summary), summary.as_bytes())?;

    art.filter.write_csv(&dir.join(FILES.filter))?;
    save_signal(
        &art.filtered_signal,
        &dir.join(FILES.filtered_signal),
        SignalFormat::Csv,
    )?;
    write_envelope_csv(&art.envelope, &dir.join(FILES.envelope))?;

    if let Some(pair) = &art.factors {
        write_labelled(
            pair.w.view(),
            "frequency_hz",
            &art.bin_freqs_hz,
            &dir.join(FILES.factors_w),
        )?;
        write_labelled(
            pair.v.t(),
            "frame_time_s",
            &art.frame_times_s,
            &dir.join(FILES.factors_v),
        )?;
    }
    Ok(())
}

/// One row per label, one column per component.
fn write_labelled(m: ArrayView2<f64>, label: &str, labels: &[f64], path: &Path) -> Result<()> {
    let mut text = String::from(label);
    for j in 0..m.ncols() {
        text.push_str(&format!(",c{j}"));
    }
    text.push('\n');
    for (row, l) in m.rows().into_iter().zip(labels) {
        text.push_str(&format_f64(*l));
        for x in row {
            text.push(',');
            text.push_str(&format_f64(*x));
        }
        text.push('\n');
    }
    write_atomically(path, text.as_bytes())
}
