//! `sc3sim` command-line driver.
//!
//! Exit status: 0 success, 1 other failure, 2 usage, 3 bad input (files,
//! configs, programs), 4 simulated deadlock, 5 a result failed validation.
//! Errors go to standard error as `error[<kind>]: <message>`.

mod args;
mod commands;
mod error;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::CliError;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return;
        }
        Err(e) => {
            let rendered = e.to_string();
            let message = rendered.trim_end().strip_prefix("error: ").unwrap_or(rendered.trim_end());
            exit_with(CliError::usage(message));
        }
    };
    let result = match &cli.command {
        Command::Asm(a) => commands::asm(a),
        Command::Run(a) => commands::run(a),
        Command::Peak(a) => commands::peak(a),
        Command::Suite(a) => commands::suite(a),
        Command::Calibrate(a) => commands::calibrate(a),
    };
    if let Err(e) = result {
        exit_with(e);
    }
}

fn exit_with(e: CliError) -> ! {
    eprintln!("{e}");
    std::process::exit(e.kind.exit_code());
}
