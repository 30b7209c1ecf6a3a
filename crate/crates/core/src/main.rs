use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use hybridrand::cli::{execute, Cli};

/// Usage and configuration errors. 0, 1 and 2 are the `test` verdicts.
const EXIT_USAGE: u8 = 64;
/// Runtime failures: I/O, exhausted sources, invalid streams.
const EXIT_FAILURE: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = cli.into_config().and_then(execute);
    match result {
        Ok(outcome) => {
            if let Some(text) = outcome.stdout {
                let _ = std::io::stdout().write_all(text.as_bytes());
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                hybridrand::Error::Config(_) => ExitCode::from(EXIT_USAGE),
                _ => ExitCode::from(EXIT_FAILURE),
            }
        }
    }
}
