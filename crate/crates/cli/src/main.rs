//! `bohmspin` command-line interface.

mod args;
mod commands;
mod manifest;

use std::process::ExitCode;

use clap::{CommandFactory, Parser};

use args::Cli;

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration: exit 2 with usage.
    Usage(String),
    /// The run itself failed or did not validate: exit 1.
    Failed(String),
}

impl From<bohmspin::Error> for CliError {
    fn from(e: bohmspin::Error) -> Self {
        use bohmspin::Error as E;
        match e {
            E::InvalidConfig(_) | E::NonPositiveDrift(_) | E::InvalidAngle(_) | E::InvalidSpec(_) | E::InvalidGrid(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Failed(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.render().to_string();
            eprint!("{text}");
            if !text.contains("Usage:") {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
