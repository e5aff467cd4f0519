use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lrsd_cli::{commands, CliError};

/// Low-rank plus sparse decomposition experiments.
///
/// Exit codes: 0 success, 1 IO or file format error, 2 usage or invalid
/// configuration, 3 numeric failure. `LRSD_THREADS` caps the worker threads
/// of distributed runs; `RUST_LOG=info` shows progress.
#[derive(Parser)]
#[command(name = "lrsd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance bundle from a JSON spec.
    Generate {
        spec: PathBuf,
        /// Output directory of the bundle.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the configured algorithms and write one trace CSV per algorithm.
    Solve { config: PathBuf },
    /// Like `solve`, plus a combined CSV and comparison charts.
    Compare { config: PathBuf },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { spec, out } => commands::cmd_generate(&spec, &out),
        Command::Solve { config } => commands::cmd_solve(&config).map(|_| ()),
        Command::Compare { config } => commands::cmd_compare(&config).map(|_| ()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
