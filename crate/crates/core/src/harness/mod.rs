//! Experiment orchestration: SNR sweeps over Monte-Carlo trials, result
//! rows, summaries and their files.

mod config;
mod output;

pub use config::{parse_config_file, parse_config_str, parse_snr_points, ExperimentConfig, KEYS};
pub use output::{format_float, read_results_csv, summary_path, trace_path, write_results, write_traces, CSV_HEADER};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analog::design_analog;
use crate::channel::generate_channel_set_for_trial;
use crate::digital::{effective_channels, zero_forcing_directions};
use crate::error::Result;
use crate::link::{ber_monte_carlo, fairness_stats, LinkMetrics, SampleStats};
use crate::rng::{mix_seed, BER_STREAM, INIT_STREAM};
use crate::sca::{sca_optimize, IterateRecord, ScaModel, Variant};

/// One device of one trial at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub scheme: Variant,
    pub trial: u64,
    pub device: usize,
    pub multicast_sinr: f64,
    pub unicast_sinr: f64,
    pub multicast_se: f64,
    pub unicast_se: f64,
    pub delta: f64,
    pub power_budget_used: f64,
    pub split_ratio: f64,
    pub sca_iterations: usize,
    pub converged: bool,
    pub multicast_ber: Option<f64>,
    pub unicast_ber: Option<f64>,
}

/// A device whose trial produced no result, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureMarker {
    pub snr_db: f64,
    pub trial: u64,
    pub device: usize,
    pub reason: String,
}

/// SCA diagnostics of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialTrace {
    pub snr_db: f64,
    pub trial: u64,
    pub converged: bool,
    pub history: Vec<IterateRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSummary {
    pub snr_db: f64,
    pub trials_completed: usize,
    pub trials_failed: usize,
    pub trials_converged: usize,
    pub mean_multicast_se: f64,
    pub mean_unicast_se: f64,
    /// Sum over devices of the mean multicast SE.
    pub aggregate_multicast_se: f64,
    /// Sum over devices of the mean multicast plus unicast SE.
    pub aggregate_se: f64,
    /// Mean over trials of the standard deviation of multicast SE across devices.
    pub across_device_multicast_se_std: f64,
    pub mean_delta: f64,
    pub device_multicast_se: Vec<SampleStats>,
    pub device_unicast_se: Vec<SampleStats>,
    pub mean_multicast_ber: Option<f64>,
    pub mean_unicast_ber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheme: Variant,
    pub base_seed: u64,
    pub trials: usize,
    pub rows: usize,
    pub points: Vec<SnrSummary>,
    pub failures: Vec<FailureMarker>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailureMarker>,
    pub summary: Summary,
    /// Filled only when traces were requested.
    pub traces: Vec<TrialTrace>,
}

/// Seed of the multicast precoder initialization of one trial.
pub fn init_seed(base_seed: u64, trial: u64) -> u64 {
    mix_seed(base_seed ^ INIT_STREAM, 0, trial)
}

/// Seed of the BER simulation of one (SNR point, trial).
pub fn ber_seed(base_seed: u64, snr_index: usize, trial: u64) -> u64 {
    mix_seed(base_seed ^ BER_STREAM, snr_index as u64, trial)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    run_experiment_traced(cfg, false)
}

/// Runs every (SNR point, trial) pair in parallel. Channels depend on the
/// trial only, so each trial sees the same draws at every SNR point.
pub fn run_experiment_traced(cfg: &ExperimentConfig, keep_traces: bool) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, u64)> =
        (0..cfg.snr_db_points.len()).flat_map(|s| (0..cfg.trials as u64).map(move |t| (s, t))).collect();
    let results: Vec<(usize, u64, Result<TrialOutput>)> =
        jobs.par_iter().map(|&(s, t)| (s, t, run_trial(cfg, s, t))).collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    for (s, t, r) in results {
        let snr_db = cfg.snr_db_points[s];
        match r {
            Ok((rs, trace)) => {
                rows.extend(rs);
                if keep_traces {
                    traces.push(trace);
                }
            }
            Err(e) => failures.extend((0..cfg.system.k_devices).map(|device| FailureMarker {
                snr_db,
                trial: t,
                device,
                reason: e.to_string(),
            })),
        }
    }
    let order = |a: &f64, b: &f64| a.total_cmp(b);
    rows.sort_by(|a, b| order(&a.snr_db, &b.snr_db).then((a.trial, a.device).cmp(&(b.trial, b.device))));
    failures.sort_by(|a, b| order(&a.snr_db, &b.snr_db).then((a.trial, a.device).cmp(&(b.trial, b.device))));
    traces.sort_by(|a, b| order(&a.snr_db, &b.snr_db).then(a.trial.cmp(&b.trial)));

    let summary = summarize(cfg, &rows, &failures);
    Ok(ExperimentOutput { rows, failures, summary, traces })
}

type TrialOutput = (Vec<ResultRow>, TrialTrace);

fn run_trial(cfg: &ExperimentConfig, snr_index: usize, trial: u64) -> Result<TrialOutput> {
    let snr_db = cfg.snr_db_points[snr_index];
    let sys = cfg.system.with_snr_db(snr_db);
    let settings = cfg.sca_settings();
    let set = generate_channel_set_for_trial(&sys, cfg.base_seed, trial);
    let analog = design_analog(&set, &sys)?;
    let eff = effective_channels(&set, &analog)?;
    let dirs = zero_forcing_directions(&eff)?;
    let model = ScaModel::new(&analog, &eff, &dirs, &sys, cfg.scheme)?;
    let sol = sca_optimize(&model, &settings, init_seed(cfg.base_seed, trial))?;
    let metrics = LinkMetrics::evaluate(&eff, &dirs, &sol, sys.sigma2)?;
    let ber = if cfg.ber_symbols > 0 {
        Some(ber_monte_carlo(
            &eff,
            &dirs,
            &sol,
            sys.sigma2,
            cfg.ber_symbols,
            ber_seed(cfg.base_seed, snr_index, trial),
        )?)
    } else {
        None
    };
    let e = model.multicast_power(&sol.coords);
    let s = model.unicast_power(&sol.p);
    let split_ratio = if s > 0.0 { e / s } else { f64::INFINITY };
    let rows = (0..sys.k_devices)
        .map(|k| ResultRow {
            snr_db,
            scheme: cfg.scheme,
            trial,
            device: k,
            multicast_sinr: metrics.multicast_sinr[k],
            unicast_sinr: metrics.unicast_sinr[k],
            multicast_se: metrics.multicast_se[k],
            unicast_se: metrics.unicast_se[k],
            delta: sol.delta,
            power_budget_used: e + s,
            split_ratio,
            sca_iterations: sol.iterations(),
            converged: sol.converged,
            multicast_ber: ber.as_ref().map(|b| b.device_multicast_ber[k]),
            unicast_ber: ber.as_ref().map(|b| b.device_unicast_ber[k]),
        })
        .collect();
    let trace = TrialTrace { snr_db, trial, converged: sol.converged, history: sol.history };
    Ok((rows, trace))
}

/// Rounds to the precision written to the CSV.
fn as_written(x: f64) -> f64 {
    format_float(x).parse().unwrap_or(x)
}

/// Per-SNR statistics from the values exactly as written, so that a reader
/// of the CSV recomputes the same numbers.
pub fn summarize(cfg: &ExperimentConfig, rows: &[ResultRow], failures: &[FailureMarker]) -> Summary {
    let k = cfg.system.k_devices;
    let mut points = Vec::new();
    for &snr in &cfg.snr_db_points {
        let here: Vec<&ResultRow> = rows.iter().filter(|r| r.snr_db == snr).collect();
        let mut trials: Vec<u64> = here.iter().map(|r| r.trial).collect();
        trials.dedup();
        let failed = {
            let mut t: Vec<u64> = failures.iter().filter(|f| f.snr_db == snr).map(|f| f.trial).collect();
            t.dedup();
            t.len()
        };
        let per_trial = |f: &dyn Fn(&ResultRow) -> f64| -> Vec<Vec<f64>> {
            trials
                .iter()
                .map(|&t| {
                    let mut v = vec![0.0; k];
                    for r in here.iter().filter(|r| r.trial == t) {
                        v[r.device] = as_written(f(r));
                    }
                    v
                })
                .collect()
        };
        let mc = per_trial(&|r| r.multicast_se);
        let uc = per_trial(&|r| r.unicast_se);
        let n = here.len().max(1) as f64;
        let mean_of = |m: &[Vec<f64>]| m.iter().flatten().sum::<f64>() / n;
        let device_mean = |m: &[Vec<f64>], d: usize| m.iter().map(|r| r[d]).sum::<f64>() / m.len().max(1) as f64;
        let aggregate_multicast_se: f64 = (0..k).map(|d| device_mean(&mc, d)).sum();
        let aggregate_unicast_se: f64 = (0..k).map(|d| device_mean(&uc, d)).sum();
        let spread = if k >= 2 && !mc.is_empty() {
            mc.iter()
                .map(|r| {
                    let m = r.iter().sum::<f64>() / k as f64;
                    (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
                })
                .sum::<f64>()
                / mc.len() as f64
        } else {
            0.0
        };
        let mean_ber = |f: &dyn Fn(&ResultRow) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = here.iter().map(|r| f(r).map(as_written)).collect();
            v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        points.push(SnrSummary {
            snr_db: snr,
            trials_completed: trials.len(),
            trials_failed: failed,
            trials_converged: here.iter().filter(|r| r.device == 0 && r.converged).count(),
            mean_multicast_se: mean_of(&mc),
            mean_unicast_se: mean_of(&uc),
            aggregate_multicast_se,
            aggregate_se: aggregate_multicast_se + aggregate_unicast_se,
            across_device_multicast_se_std: spread,
            mean_delta: here.iter().map(|r| as_written(r.delta)).sum::<f64>() / n,
            device_multicast_se: fairness_stats(&mc).unwrap_or_default(),
            device_unicast_se: fairness_stats(&uc).unwrap_or_default(),
            mean_multicast_ber: mean_ber(&|r| r.multicast_ber),
            mean_unicast_ber: mean_ber(&|r| r.unicast_ber),
        });
    }
    Summary {
        scheme: cfg.scheme,
        base_seed: cfg.base_seed,
        trials: cfg.trials,
        rows: rows.len(),
        points,
        failures: failures.to_vec(),
    }
}
