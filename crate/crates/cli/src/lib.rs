//! Command-line driver for kfp-core: experiment configs, result files and the
//! verification suite.

pub mod args;
pub mod commands;
pub mod config;
pub mod emit;
mod error;
pub mod verify;

pub use error::{CliError, CliResult};

use args::Cli;
use clap::error::ErrorKind;
use clap::Parser;
use std::ffi::OsString;

fn parse(argv: &[OsString]) -> Result<Cli, i32> {
    Cli::try_parse_from(argv).map_err(|e| {
        let _ = e.print();
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 0,
            _ => 64,
        }
    })
}

/// Runs one invocation and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let mut cli = match parse(&argv) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Some(path) = cli.config.clone() {
        let translated = config::read(&path).and_then(|c| {
            let dir = path.parent().map(|d| d.to_path_buf()).unwrap_or_default();
            config::to_argv(&c, &dir)
        });
        let argv = match translated {
            Ok(a) => a,
            Err(e) => {
                eprintln!("kfp: {e}");
                return e.exit_code();
            }
        };
        cli = match parse(&argv) {
            Ok(c) => c,
            Err(code) => return code,
        };
    }
    match commands::execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kfp: {e}");
            e.exit_code()
        }
    }
}
