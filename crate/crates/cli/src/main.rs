//! `masklm`: data generation, training, evaluation and analysis of masked
//! and finetuned toy encoders.
//!
//! Every command is deterministic given its seeds and writes a key/value
//! report (to `--report` or stdout). Exit codes: 0 ok, 1 user error,
//! 2 internal error.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use masklm::Error;

use crate::args::Cli;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Shape { .. } | Error::NonScalarLoss(_) | Error::NonFinite(_) => 2,
        _ => 1,
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
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
