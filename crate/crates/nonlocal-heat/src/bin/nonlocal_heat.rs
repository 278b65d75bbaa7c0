//! Command-line front end: run experiments, verify invariants, sweep a
//! parameter axis, refit written series.
//!
//! Exit codes: 0 success, 1 verification failure, 2 config error, 3
//! runtime or numerical error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nonlocal_heat::config::parse_config;
use nonlocal_heat::experiment::{fit_csv_column, run_experiment, sweep, SweepAxis};
use nonlocal_heat::verify::{run_suites, SuiteSelector};
use nonlocal_heat::Error;

#[derive(Parser)]
#[command(
    name = "nonlocal-heat",
    version,
    about = "Laboratory for the nonlocal heat equation: decay-rate experiments \
             with heavy-tailed and compact jump kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file; writes its CSV series and
    /// JSON summary.
    Run {
        /// Path to a key = value config document.
        config: PathBuf,
    },
    /// Run invariant suites with fixed seeds.
    Verify {
        /// all, inequalities, dynamics or decay.
        #[arg(default_value = "all")]
        selector: String,
    },
    /// Run one experiment per value along one axis and write a table.
    Sweep {
        /// Base config; the axis value overrides it per run.
        config: PathBuf,
        /// sigma, q or kernel_family.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Refit one lq column of a written series CSV.
    Fit {
        csv: PathBuf,
        /// Which lq_<q> column to fit.
        #[arg(long)]
        q: f64,
        /// Trailing fraction of log time to fit.
        #[arg(long, default_value_t = 0.5)]
        window: f64,
    },
}

const EXIT_VERIFICATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => EXIT_CONFIG,
                _ => EXIT_RUNTIME,
            })
        }
    }
}

fn read_config(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Config {
        key: path.display().to_string(),
        message: format!("cannot read config: {e}"),
    })
}

/// Reclassifies an invalid command-line value as a config-class error so it
/// exits with code 2.
fn config_class(key: &str, e: Error) -> Error {
    Error::Config {
        key: key.to_string(),
        message: match e {
            Error::InvalidArgument(message) => message,
            other => other.to_string(),
        },
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run { config } => {
            let config = parse_config(&read_config(&config)?)?;
            let outcome = run_experiment(&config)?;
            for entry in &outcome.summary.fits {
                println!(
                    "q = {}: slope {:.4} vs predicted {:.4} (r2 = {:.4}, window \
                     [{:.3}, {:.3}], {} samples)",
                    entry.q,
                    entry.fit.slope,
                    -entry.theoretical_exponent,
                    entry.fit.r_squared,
                    entry.fit.window.0,
                    entry.fit.window.1,
                    entry.fit.samples_used,
                );
            }
            println!(
                "wrote {} and {}",
                config.output.csv.display(),
                config.output.summary.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { selector } => {
            let selector: SuiteSelector =
                selector.parse().map_err(|e| config_class("selector", e))?;
            let reports = run_suites(selector)?;
            let mut failures = 0usize;
            let mut total = 0usize;
            for report in &reports {
                for check in &report.checks {
                    total += 1;
                    if !check.passed {
                        failures += 1;
                    }
                    println!(
                        "{} {}/{}: margin {:+.3e} ({})",
                        if check.passed { "PASS" } else { "FAIL" },
                        report.suite,
                        check.name,
                        check.margin,
                        check.detail,
                    );
                }
            }
            if failures == 0 {
                println!("all {total} checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("{failures} of {total} checks failed");
                Ok(ExitCode::from(EXIT_VERIFICATION))
            }
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let config = parse_config(&read_config(&config)?)?;
            let axis: SweepAxis = axis.parse().map_err(|e| config_class("axis", e))?;
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(Error::Config {
                    key: "values".to_string(),
                    message: "a sweep needs at least one value".to_string(),
                });
            }
            let rows = sweep(&config, axis, &values)?;
            let mut failed = 0usize;
            for row in &rows {
                match (&row.error, row.slope, row.theoretical_exponent) {
                    (None, Some(slope), Some(predicted)) => println!(
                        "{} = {}: slope {slope:.4} vs predicted {:.4}",
                        axis, row.value, -predicted
                    ),
                    _ => {
                        failed += 1;
                        println!(
                            "{} = {}: failed ({})",
                            axis,
                            row.value,
                            row.error.as_deref().unwrap_or("unknown error")
                        );
                    }
                }
            }
            if failed > 0 {
                println!("{failed} of {} runs failed", rows.len());
            }
            println!("wrote {}", config.output.sweep.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Fit { csv, q, window } => {
            let text = fs::read_to_string(&csv)?;
            let fit = fit_csv_column(&text, q, window)?;
            let json = serde_json::to_string_pretty(&fit)
                .map_err(|e| Error::InvalidArgument(format!("fit serialization: {e}")))?;
            println!("{json}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
