//! `rbsde` batch front end.
//!
//! A run is a JSON config file; flags only locate the file and optionally
//! override the output directory. Exit statuses: 0 success, 2 config error,
//! 3 precondition violation, 4 solver failure, 5 check failure.

mod actions;
mod config;
mod error;
mod expr;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "rbsde", version, about = "Lattice laboratory for reflected BSDEs with monotone drivers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run configuration and write its reports.
    Run {
        /// Path to the JSON run configuration.
        config: PathBuf,
        /// Override the output directory from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and validate a configuration without running it.
    Validate {
        /// Path to the JSON run configuration.
        config: PathBuf,
    },
    /// List built-in scenarios, drivers and actions.
    Scenarios,
}

fn load_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
    let config = RunConfig::parse(&text)?;
    config.validate()?;
    Ok(config)
}

fn run(config: &RunConfig, out_override: Option<PathBuf>) -> Result<(), CliError> {
    let out_dir = out_override.unwrap_or_else(|| PathBuf::from(&config.output.dir));
    let body = || -> Result<(), CliError> {
        let written = actions::execute(config, &out_dir)?;
        actions::verify_round_trip(&written.files)?;
        for file in &written.files {
            println!("wrote {}", file.display());
        }
        Ok(())
    };
    let result = match config.workers {
        None => body(),
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| CliError::Precondition(format!("cannot build worker pool: {e}")))?
            .install(body),
    };
    if let Err(err) = &result {
        actions::write_error_report(&out_dir, Some(config), err);
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome: Result<(), CliError> = match cli.command {
        Command::Run { config, out } => load_config(&config).and_then(|cfg| run(&cfg, out)),
        Command::Validate { config } => load_config(&config).map(|_| println!("ok")),
        Command::Scenarios => {
            actions::print_scenarios();
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
