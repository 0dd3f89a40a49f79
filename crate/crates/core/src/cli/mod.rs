//! The `rdperm` command-line tool.
//!
//! Every command writes a versioned JSON report (to `--out`, or standard
//! output) and a short human-readable summary (standard output, or standard
//! error when the report takes standard output). Tabular data goes to CSV
//! under `--plot-out`.
//!
//! Exit codes: 0 success, 1 execution error, 2 invalid configuration or
//! usage, 3 data error, 4 degenerate window.

pub mod args;
mod commands;
mod report;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

use crate::data::DataError;
use crate::inference::InferenceError;
use crate::models::ModelError;
use crate::permute::PermError;
use crate::simlab::SimError;
use crate::spectests::{BalanceError, McCraryError};
use crate::windowing::WindowingError;

pub use args::Cli;
pub use report::{Report, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn degenerate(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DEGENERATE,
            message: message.into(),
        }
    }

    pub fn failure(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::DegenerateWindow { .. } => CliError::degenerate(e.to_string()),
            DataError::InvalidWindow(_) => CliError::config(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<PermError> for CliError {
    fn from(e: PermError) -> Self {
        match e {
            PermError::AllTreatedOrAllControl { .. } | PermError::TooFewForRanks => CliError::degenerate(e.to_string()),
            PermError::NoDraws => CliError::config(e.to_string()),
            _ => CliError::failure(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::failure(e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Data(d) => d.into(),
            InferenceError::Perm(p) => p.into(),
            InferenceError::InvalidGrid(_) | InferenceError::InvalidAlpha(_) => CliError::config(e.to_string()),
            _ => CliError::failure(e.to_string()),
        }
    }
}

impl From<BalanceError> for CliError {
    fn from(e: BalanceError) -> Self {
        match e {
            BalanceError::Data(d) => d.into(),
            BalanceError::Perm(p) => p.into(),
            BalanceError::NoCovariates => CliError::config(e.to_string()),
            _ => CliError::failure(e.to_string()),
        }
    }
}

impl From<McCraryError> for CliError {
    fn from(e: McCraryError) -> Self {
        match e {
            McCraryError::EmptySide(_) | McCraryError::InsufficientBins { .. } => CliError::degenerate(e.to_string()),
            McCraryError::InvalidOption(_) => CliError::config(e.to_string()),
            McCraryError::Fit(_) => CliError::failure(e.to_string()),
        }
    }
}

impl From<WindowingError> for CliError {
    fn from(e: WindowingError) -> Self {
        match e {
            WindowingError::Data(d) => d.into(),
            WindowingError::Balance(b) => b.into(),
            WindowingError::InvalidCandidates(_) | WindowingError::InvalidStep(_) => CliError::config(e.to_string()),
            WindowingError::ExhaustedWithoutPass { .. } => CliError::failure(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidSpec(_) => CliError::config(e.to_string()),
            _ => CliError::failure(e.to_string()),
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ! {
    std::process::exit(run_from(std::env::args_os()))
}
