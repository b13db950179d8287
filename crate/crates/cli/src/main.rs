//! `whackamole`: spray traces, deviation reports, profile updates,
//! simulations and bound sweeps from the command line.
//!
//! Exit status is 0 on success, 1 on invalid input and 2 when
//! `verify-bounds` finds a deviation above its bound.

mod commands;
mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "whackamole",
    version,
    about = "Deterministic multipath packet spraying toolkit"
)]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Human-readable tables instead of JSON/CSV.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-packet spray decisions as CSV `j,selection_point,path,sa,sb,method`.
    Trace(commands::TraceArgs),
    /// Per-path deviation of a profile with its proven bounds.
    Deviation(commands::DeviationArgs),
    /// Apply one profile update procedure.
    Update(commands::UpdateArgs),
    /// Run the discrete-event simulator on a JSON config.
    Sim(commands::SimArgs),
    /// Sweep random seeds and profiles and check every path deviation.
    VerifyBounds(verify::VerifyArgs),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Rendered output and whether a bound violation was found.
pub struct Outcome {
    pub body: String,
    pub violation: bool,
}

impl Outcome {
    pub fn ok(body: String) -> Self {
        Self {
            body,
            violation: false,
        }
    }
}

/// Shared arguments for commands that take a profile.
#[derive(Args, Debug, Clone)]
pub struct ProfileArgs {
    /// Comma-separated ball counts, e.g. `127,400,200,173,124`.
    #[arg(long)]
    profile: String,
    /// Expected total; must equal the sum of the counts.
    #[arg(long)]
    m: Option<u64>,
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Trace(args) => commands::trace(args, cli.pretty),
        Command::Deviation(args) => commands::deviation(args, cli.pretty),
        Command::Update(args) => commands::update(args, cli.pretty),
        Command::Sim(args) => commands::sim(args, cli.pretty),
        Command::VerifyBounds(args) => verify::verify_bounds(args, cli.pretty),
    }
}

fn emit(out: Option<&PathBuf>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
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
    match run(&cli)
        .and_then(|outcome| emit(cli.out.as_ref(), &outcome.body).map(|_| outcome.violation))
    {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
