//! Batch CLI: run verification suites from a JSON config and emit a JSON
//! report. Exit status 0 when all verdicts pass, 1 on violations, 2 on
//! configuration errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use contactlab::runner::{self, RunConfig, RunError};

#[derive(Parser)]
#[command(name = "contactlab", version, about = "Residual verification for immersed submanifolds of almost contact metric manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured suites and write a JSON report.
    Run {
        /// Path to the JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the number of sample points.
        #[arg(long)]
        samples: Option<usize>,
        /// Override the sampling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override a named tolerance, e.g. --tol lemmas=1e-5 (repeatable).
        #[arg(long = "tol", value_parser = parse_tol)]
        tol: Vec<(String, f64)>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Restrict to a named suite (repeatable).
        #[arg(long = "suite")]
        suite: Vec<String>,
    },
    /// List catalog entries, optionally filtered by substring.
    Catalog { filter: Option<String> },
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let value: f64 = value
        .parse()
        .map_err(|e| format!("bad tolerance value `{value}`: {e}"))?;
    Ok((name.to_string(), value))
}

fn run_command(
    config: PathBuf,
    samples: Option<usize>,
    seed: Option<u64>,
    tol: Vec<(String, f64)>,
    output: Option<PathBuf>,
    suite: Vec<String>,
) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let mut cfg: RunConfig = match serde_json::from_str(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config parse error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(samples) = samples {
        cfg.samples = samples;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    for (name, value) in tol {
        cfg.tolerances.insert(name, value);
    }
    if !suite.is_empty() {
        cfg.suites = Some(suite);
    }

    match runner::run(&cfg) {
        Ok(report) => {
            let json = match serde_json::to_string_pretty(&report) {
                Ok(j) => j,
                Err(e) => {
                    eprintln!("report serialization failed: {e}");
                    return ExitCode::from(2);
                }
            };
            match &output {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, json + "\n") {
                        eprintln!("cannot write {}: {e}", path.display());
                        return ExitCode::from(2);
                    }
                }
                None => println!("{json}"),
            }
            for suite in &report.suites {
                eprintln!(
                    "suite {:<10} {}",
                    suite.suite,
                    if suite.pass { "pass" } else { "FAIL" }
                );
            }
            if let Some(label) = &report.classification {
                eprintln!("classification: {label}");
            }
            ExitCode::from(if report.overall_pass { 0 } else { 1 })
        }
        Err(RunError::Config(issues)) => {
            for issue in &issues {
                eprintln!("{}: {}", issue.path, issue.message);
            }
            ExitCode::from(2)
        }
        Err(RunError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            samples,
            seed,
            tol,
            output,
            suite,
        } => run_command(config, samples, seed, tol, output, suite),
        Command::Catalog { filter } => {
            for (name, description) in runner::catalog_list(filter.as_deref()) {
                println!("{name:<16} {description}");
            }
            ExitCode::SUCCESS
        }
    }
}
