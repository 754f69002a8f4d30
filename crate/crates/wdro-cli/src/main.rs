//! Batch front end for the equilibrium-trigger engine. Every run is driven
//! by a TOML config so results are reproducible from the file alone; the
//! command line picks the subcommand, an optional output directory, and
//! whether models that fail the smooth-pasting validity test may still be
//! evaluated as raw candidates.
//!
//! Exit codes: 0 success, 1 config or numeric error, 2 validity refusal,
//! 3 verification failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparsable, or inconsistent configuration, and numeric
    /// setup failures. Exit code 1.
    Config(String),
    /// The model fails smooth pasting and the command was not told to
    /// proceed with the raw candidate. Exit code 2.
    Refusal(String),
    /// A verification tolerance was exceeded. Exit code 3.
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Refusal(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Refusal(msg) | CliError::CheckFailed(msg) => {
                f.write_str(msg)
            }
        }
    }
}

/// Investment triggers and value functions under weighted discounting, with
/// the diagnostics that decide whether the closed forms are trustworthy.
#[derive(Parser)]
#[command(name = "wdro", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the investment trigger over a capacity grid
    Trigger(CommonArgs),
    /// Emit the value function and marginal value over a state grid
    Value(CommonArgs),
    /// Run the verification suite and print a pass/fail table
    Check(CommonArgs),
    /// Emit the figure data sets (fig1.csv, fig2.csv, fig3.csv)
    Figures(CommonArgs),
    /// Replay the trigger policy by simulation and compare to the closed form
    Simulate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the run configuration (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Proceed with the raw candidate formulas when smooth pasting fails
    #[arg(long)]
    allow_invalid: bool,
    /// Write outputs into this directory instead of stdout
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn run(command: &Command) -> Result<(), CliError> {
    let args = match command {
        Command::Trigger(a)
        | Command::Value(a)
        | Command::Check(a)
        | Command::Figures(a)
        | Command::Simulate(a) => a,
    };
    let cfg = RunConfig::load(&args.config)?;
    let out = args.out.as_deref();
    match command {
        Command::Trigger(_) => commands::cmd_trigger(&cfg, args.allow_invalid, out),
        Command::Value(_) => commands::cmd_value(&cfg, args.allow_invalid, out),
        Command::Check(_) => commands::cmd_check(&cfg, args.allow_invalid, out),
        Command::Figures(_) => commands::cmd_figures(&cfg, out),
        Command::Simulate(_) => commands::cmd_simulate(&cfg, args.allow_invalid, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                // Usage mistakes are config errors in this tool's contract,
                // not clap's default exit code 2 (which means a validity
                // refusal here).
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
