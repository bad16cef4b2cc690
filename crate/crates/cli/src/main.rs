mod config;
mod datagen;
mod eval;
mod fit;
mod run;
mod select;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Deep sketched output kernel regression.
#[derive(Debug, Parser)]
#[command(name = "dsokr", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset and its manifest.
    Datagen(datagen::Args),
    /// Sweep sketch sizes with Perfect h and/or run approximate leverage scores.
    SelectM(select::Args),
    /// Fit a sketched basis and train the input network.
    Fit(fit::Args),
    /// Decode a split against a candidate set and report metrics.
    #[command(alias = "decode")]
    Eval(eval::Args),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] dsokr::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Datagen(a) => datagen::run(a),
        Command::SelectM(a) => select::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Eval(a) => eval::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
