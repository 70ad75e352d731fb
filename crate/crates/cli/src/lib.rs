//! Library half of the `cspc` binary.
//!
//! Subcommands are plain functions returning an [`Outcome`], so tests can
//! run them in-process and compare against direct library calls.
//!
//! Exit codes: 0 for success with no alarms, 1 when `monitor` saw at least
//! one alarm, 2 for any error (bad flags, unreadable input, corrupt
//! archive, scorer or dimension mismatch).

use std::path::PathBuf;

pub mod args;
pub mod commands;
pub mod input;

pub use args::{Cli, Command};
pub use commands::{cmd_calibrate, cmd_chart, cmd_monitor, cmd_simulate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ALARM: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read `{}`: {source}", path.display())]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write `{}`: {source}", path.display())]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Archive {
        path: PathBuf,
        source: conformal_spc::Error,
    },
    #[error(transparent)]
    Core(#[from] conformal_spc::Error),
    #[error("{0}")]
    Usage(String),
}

/// What a successful subcommand reports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub stdout: String,
    /// Non-fatal messages for standard error.
    pub warnings: Vec<String>,
    /// Set by `monitor` when any point alarmed.
    pub alarm: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.alarm {
            EXIT_ALARM
        } else {
            EXIT_OK
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Monitor(a) => cmd_monitor(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Chart(a) => cmd_chart(a),
    }
}
