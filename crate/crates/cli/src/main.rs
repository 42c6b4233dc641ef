//! `awp`: compress a layer, run baselines and benchmark suites.
//!
//! Exit status is 0 on success, 2 for bad input or configuration and 3 for
//! numerical failures (divergence, non-finite values, non-convergence).

mod args;
mod commands;
mod io;

use std::process::ExitCode;

use awp_core::AwpError;
use clap::Parser;

use args::{Cli, Command};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// A failed command: message for standard error plus exit status.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }
}

impl From<AwpError> for Failure {
    fn from(e: AwpError) -> Self {
        if e.is_numerical() {
            Self::numerical(e.to_string())
        } else {
            Self::input(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Compress(a) => commands::compress(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Bench(a) => commands::bench(a),
        Command::OracleCompare(a) => commands::oracle_compare(a),
        Command::Synth(a) => commands::synth(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("awp: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
