//! Config-driven experiment runner for hierarchical delayed-acceptance
//! sampling.
//!
//! Exit codes: 0 on success, 1 on configuration/validation errors, 2 on
//! runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mlda_cli::{config, experiment, report, runner};

#[derive(Parser)]
#[command(name = "mlda", about = "Hierarchical delayed-acceptance MCMC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override the config seed (also via the MLDA_SEED variable).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "mlda-output")]
        output_dir: PathBuf,
        /// Override the number of chains.
        #[arg(long)]
        chains: Option<usize>,
        /// Worker threads for parallel chains (0 = one per core). Never
        /// affects results.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Recompute diagnostics from a run directory.
    Diagnose {
        chain_dir: PathBuf,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recompute estimator reports from a run directory.
    Estimate {
        chain_dir: PathBuf,
        /// Reference expectation for error reporting.
        #[arg(long)]
        reference: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

enum CliError {
    Validation(String),
    Runtime(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, seed, output_dir, chains, threads } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| CliError::Validation(format!("{}: {e}", config.display())))?;
            let parsed = config::Config::from_json(&text)
                .map_err(|e| CliError::Validation(e.to_string()))?;

            // Seed priority: --seed, then MLDA_SEED, then the config.
            let env_seed = std::env::var("MLDA_SEED")
                .ok()
                .map(|s| {
                    s.parse::<u64>()
                        .map_err(|_| CliError::Validation(format!("MLDA_SEED: bad value {s:?}")))
                })
                .transpose()?;
            let seed = seed.or(env_seed).unwrap_or(parsed.sampler.seed);
            let chains = chains.unwrap_or(parsed.sampler.chains);
            if chains == 0 {
                return Err(CliError::Validation("--chains: must be positive".into()));
            }

            let experiment = experiment::build(&parsed, seed, chains)
                .map_err(|e| CliError::Validation(format!("{e:#}")))?;
            let artifacts = runner::run(&experiment, &output_dir, threads)
                .map_err(|e| CliError::Runtime(format!("{e:#}")))?;
            println!(
                "run complete: {} chains, {} draws, {} files in {}",
                chains,
                parsed.sampler.draws,
                artifacts.written.len(),
                output_dir.display()
            );
            Ok(())
        }
        Command::Diagnose { chain_dir, output } => {
            let report = report::diagnose(&chain_dir).map_err(|e| CliError::Runtime(format!("{e:#}")))?;
            emit_json(&report, output)
        }
        Command::Estimate { chain_dir, reference, output } => {
            let report = report::estimate(&chain_dir, reference)
                .map_err(|e| CliError::Runtime(format!("{e:#}")))?;
            emit_json(&report, output)
        }
    }
}

fn emit_json<T: serde::Serialize>(value: &T, output: Option<PathBuf>) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    match output {
        Some(path) => std::fs::write(&path, text)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
