//! `gtg`: run federations, evaluate contribution estimators on their gradient
//! logs and compare estimators against a ground truth.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime and data errors.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub const OUT_DIR_ENV: &str = "GTG_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "gtg", version, about = "Contribution evaluation for federated learning")]
pub struct Cli {
    /// Overrides the master seed of the config (for `evaluate`, only the estimator seeds).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Print the effective configuration as TOML and exit without computing.
    #[arg(long, global = true)]
    pub print_config: bool,

    /// Only print errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a federation and store its gradient log with a metadata sidecar.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to $GTG_OUT_DIR, then the config's output_dir.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Run one estimator on a stored gradient log.
    Evaluate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        estimator: String,
        /// TOML file with the estimator's parameters.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Output directory; falls back to $GTG_OUT_DIR, then the log's directory.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Simulate, then score every configured estimator against the reference.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
    /// Merge comparison reports into one table.
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
