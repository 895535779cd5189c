//! Command-line front end for the SOPS stability toolkit.

pub mod commands;
pub mod spec;

use clap::{Parser, Subcommand};
use serde_json::Value;
use sopslab_core::LabError;

pub use spec::{ExperimentSpec, Flags};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for bad input, 3 for numerical or I/O failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Lab(e) if e.is_validation() => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sops-lab",
    about = "Stability of slowly oscillating periodic solutions in delay networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Limiting profile constants, Hopf gain and a nu* table.
    Profile(Flags),
    /// Locate the periodic orbit and compare it with the limiting profile.
    Sops(Flags),
    /// Dominant Floquet multipliers over a list of lambda values.
    Floquet(Flags),
    /// Run a synchrony classifier selected by --rule.
    Classify(Flags),
    /// Sample the boundary |nu*| = 1 - delta.
    Region(Flags),
    /// Integrate the coupled network and measure synchrony.
    Simulate(Flags),
    /// Ring experiments at nu* levels (0.9 and 1.1 by default).
    Figure(Flags),
}

type Handler = fn(&ExperimentSpec, Option<&std::path::Path>) -> Result<Value, CliError>;

pub fn run(cli: &Cli) -> Result<Value, CliError> {
    let (flags, f): (&Flags, Handler) = match &cli.command {
        Command::Profile(fl) => (fl, commands::profile),
        Command::Sops(fl) => (fl, commands::sops),
        Command::Floquet(fl) => (fl, commands::floquet),
        Command::Classify(fl) => (fl, commands::classify),
        Command::Region(fl) => (fl, commands::region),
        Command::Simulate(fl) => (fl, commands::simulate),
        Command::Figure(fl) => (fl, commands::figure),
    };
    let spec = ExperimentSpec::from_flags(flags)?;
    f(&spec, flags.out.as_deref())
}
