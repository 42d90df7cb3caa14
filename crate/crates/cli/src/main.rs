//! `dualcast` command-line driver.
//!
//! Exit codes: 0 success, 1 run failure or failed oracle check, 2 invalid
//! arguments or configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use dualcast::harness::{run_experiment_traced, summary_path, trace_path, write_traces};
use dualcast::{parse_config_file, toy_suite, write_results, Error, ExperimentConfig, Variant};

#[derive(Parser)]
#[command(name = "dualcast", version, about = "Hybrid multicast/unicast precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Pldm1,
    Pldm2,
}

impl From<Scheme> for Variant {
    fn from(s: Scheme) -> Variant {
        match s {
            Scheme::Pldm1 => Variant::Pldm1,
            Scheme::Pldm2 => Variant::Pldm2,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an SNR sweep and write the CSV and its summary JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        scheme: Option<Scheme>,
        /// Comma list or inclusive `start:step:stop` range, in dB.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Symbols per (SNR point, trial); 0 disables BER.
        #[arg(long)]
        ber_symbols: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-iterate SCA diagnostics to `<stem>.trace.json`.
        #[arg(long)]
        verbose: bool,
    },
    /// Check a configuration file and print its canonical form.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare SCA and the conic solver against brute-force references.
    Oracle {
        /// Run the scalar toy suite.
        #[arg(long, required = true)]
        toy: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Print the checks as JSON.
        #[arg(long)]
        json: bool,
    },
}

/// Failure classes, mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::InvalidConfig { .. } | Error::Parse { .. } => Failure::Config(e.into()),
            other => Failure::Run(other.into()),
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig, Failure> {
    match parse_config_file(path) {
        Err(e @ Error::Io { .. }) => Err(Failure::Config(anyhow::Error::new(e))),
        other => Ok(other?),
    }
}

fn simulate(config: PathBuf, overrides: [(&str, Option<String>); 6], verbose: bool) -> Result<(), Failure> {
    let mut cfg = load(&config)?;
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    cfg.validate()?;
    let out = run_experiment_traced(&cfg, verbose)?;
    let path = &cfg.output_path;
    write_results(&out.rows, &out.summary, path)?;
    if verbose {
        write_traces(&out.traces, path)?;
    }
    println!("snr_db  trials  failed  converged  mc_se    uc_se    agg_mc_se");
    for p in &out.summary.points {
        println!(
            "{:>6}  {:>6}  {:>6}  {:>9}  {:.4}  {:.4}  {:.4}",
            p.snr_db,
            p.trials_completed,
            p.trials_failed,
            p.trials_converged,
            p.mean_multicast_se,
            p.mean_unicast_se,
            p.aggregate_multicast_se
        );
    }
    println!("wrote {} rows to {}", out.rows.len(), path.display());
    println!("summary {}", summary_path(path).display());
    if verbose {
        println!("trace {}", trace_path(path).display());
    }
    Ok(())
}

fn oracle(seed: u64, json: bool) -> Result<(), Failure> {
    let checks = toy_suite(seed)?;
    if json {
        let text = serde_json::to_string_pretty(&checks).context("serializing checks").map_err(Failure::Run)?;
        println!("{text}");
    } else {
        for c in &checks {
            println!(
                "{} {}: reference {:.9e} candidate {:.9e} gap {:.2e} tol {:.0e}{}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.reference,
                c.candidate,
                c.relative_gap,
                c.tolerance,
                if c.note.is_empty() { String::new() } else { format!(" ({})", c.note) }
            );
        }
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Run(anyhow::anyhow!("{failed} of {} oracle checks failed", checks.len())));
    }
    Ok(())
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Simulate { config, scheme, snr, trials, seed, ber_symbols, out, verbose } => simulate(
            config,
            [
                ("scheme", scheme.map(|s| Variant::from(s).name().to_string())),
                ("snr_db_points", snr),
                ("trials", trials.map(|v| v.to_string())),
                ("base_seed", seed.map(|v| v.to_string())),
                ("ber_symbols", ber_symbols.map(|v| v.to_string())),
                ("output_path", out.map(|p| p.display().to_string())),
            ],
            verbose,
        ),
        Command::Validate { config } => load(&config).and_then(|cfg| {
            cfg.validate()?;
            print!("{}", cfg.to_text());
            Ok(())
        }),
        Command::Oracle { toy: _, seed, json } => oracle(seed, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
