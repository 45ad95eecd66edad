//! `topro` — token-level prompt decomposition pipeline.
//!
//! Subcommands cover the full workflow: `ingest` validates corpora, `train`
//! fine-tunes a reference scorer over the configured seeds, `predict` tags a
//! corpus with a trained model, `evaluate` computes weighted-F1 reports and
//! delta tables, and `icl` runs instruction-prompt inference with a
//! generative backend.
//!
//! Exit codes are stable for scripting: 0 success, 1 usage or configuration
//! error, 2 data validation error, 3 backend failure.

mod artifact;
mod commands;
mod error;
mod manifest;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "topro", version, about = "Token-level prompt decomposition for sequence labeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and store CoNLL-style corpora, reporting statistics.
    Ingest(commands::ingest::IngestArgs),
    /// Fine-tune a reference scorer with seed averaging.
    Train(commands::train::TrainArgs),
    /// Tag a corpus with a trained model artifact.
    Predict(commands::predict::PredictArgs),
    /// Score prediction files and build reports and delta tables.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Instruction-prompt inference with a generative backend.
    Icl(commands::icl::IclArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Ingest(args) => commands::ingest::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Icl(args) => commands::icl::run(args),
    };
    if let Err(error) = result {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
