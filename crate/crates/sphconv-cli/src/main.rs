//! `sphconv` command-line entry point.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure
//! (non-finite loss during training).

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<sphconv::data::DataError> for CliError {
    fn from(e: sphconv::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<sphconv::checkpoint::CheckpointError> for CliError {
    fn from(e: sphconv::checkpoint::CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<sphconv::bench::BenchError> for CliError {
    fn from(e: sphconv::bench::BenchError) -> Self {
        match e {
            sphconv::bench::BenchError::UnsortedSizes
            | sphconv::bench::BenchError::TooFewRepeats(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<sphconv::training::TrainError> for CliError {
    fn from(e: sphconv::training::TrainError) -> Self {
        match &e {
            sphconv::training::TrainError::NumericFailure { .. } => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Ingest(args) => commands::cmd_ingest(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Bench(args) => commands::cmd_bench(args),
        Command::Export(args) => commands::cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
