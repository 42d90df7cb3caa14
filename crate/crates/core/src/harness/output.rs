//! CSV rows and JSON sidecars.
//!
//! The CSV is UTF-8 with LF line endings, one header line and one line per
//! [`ResultRow`] in field order. Floats carry 9 significant digits; BER
//! columns are empty when BER is disabled. The summary goes to
//! `<stem>.summary.json` next to the CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ResultRow, Summary, TrialTrace};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "snr_db,scheme,trial,device,multicast_sinr,unicast_sinr,multicast_se,unicast_se,delta,power_budget_used,split_ratio,sca_iterations,converged,multicast_ber,unicast_ber";

/// Scientific notation with 9 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn sidecar(csv: &Path, suffix: &str) -> PathBuf {
    let stem = csv.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "results".into());
    csv.with_file_name(format!("{stem}.{suffix}.json"))
}

pub fn summary_path(csv: &Path) -> PathBuf {
    sidecar(csv, "summary")
}

pub fn trace_path(csv: &Path) -> PathBuf {
    sidecar(csv, "trace")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

fn csv_text(rows: &[ResultRow]) -> String {
    let mut out = String::with_capacity(160 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            format_float(r.snr_db),
            r.scheme.name(),
            r.trial,
            r.device,
            format_float(r.multicast_sinr),
            format_float(r.unicast_sinr),
            format_float(r.multicast_se),
            format_float(r.unicast_se),
            format_float(r.delta),
            format_float(r.power_budget_used),
            format_float(r.split_ratio),
            r.sca_iterations,
            r.converged,
            opt(r.multicast_ber),
            opt(r.unicast_ber),
        );
    }
    out
}

/// Writes the CSV at `path` and the summary at [`summary_path`].
pub fn write_results(rows: &[ResultRow], summary: &Summary, path: &Path) -> Result<()> {
    write_file(path, &csv_text(rows))?;
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    let sp = summary_path(path);
    write_file(&sp, &(json + "\n"))
}

pub fn write_traces(traces: &[TrialTrace], csv: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(traces).expect("traces serialize");
    write_file(&trace_path(csv), &(json + "\n"))
}

/// Reads a CSV produced by [`write_results`].
pub fn read_results_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let origin = path.display().to_string();
    let perr = |line: usize, reason: String| Error::Parse { path: origin.clone(), line, reason };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(perr(1, format!("unexpected header {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(perr(n, format!("expected 15 fields, got {}", f.len())));
        }
        let num = |j: usize| f[j].parse::<f64>().map_err(|e| perr(n, format!("field {j}: {e}")));
        let int = |j: usize| f[j].parse::<u64>().map_err(|e| perr(n, format!("field {j}: {e}")));
        let opt = |j: usize| if f[j].is_empty() { Ok(None) } else { num(j).map(Some) };
        rows.push(ResultRow {
            snr_db: num(0)?,
            scheme: f[1].parse().map_err(|e: Error| perr(n, e.to_string()))?,
            trial: int(2)?,
            device: int(3)? as usize,
            multicast_sinr: num(4)?,
            unicast_sinr: num(5)?,
            multicast_se: num(6)?,
            unicast_se: num(7)?,
            delta: num(8)?,
            power_budget_used: num(9)?,
            split_ratio: num(10)?,
            sca_iterations: int(11)? as usize,
            converged: f[12].parse().map_err(|e| perr(n, format!("field 12: {e}")))?,
            multicast_ber: opt(13)?,
            unicast_ber: opt(14)?,
        });
    }
    Ok(rows)
}
