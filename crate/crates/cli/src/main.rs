//! `asrl`: reproducible command-line experiments for the toy RL-ASR stack.
//!
//! Every subcommand reads explicit inputs, writes its outputs plus a
//! `run_manifest.json` with content digests into `--out-dir`, and is
//! deterministic for a fixed seed. Exit codes: 0 success, 2 invalid
//! usage/config, 3 runtime failure; failures print one JSON line to stderr.

mod commands;
mod failure;
mod http;
mod manifest;
mod records;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "asrl", version, about = "Toy RL-ASR pipeline experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic transcription dataset with train/eval splits.
    SynthData(commands::synth::SynthArgs),
    /// Train the toy policy with group-relative updates.
    TrainGrpo(commands::train::TrainArgs),
    /// Greedy-decode a checkpoint over a dataset and report error metrics.
    Eval(commands::eval::EvalArgs),
    /// Mine hard cases, long audio, hallucinations; assemble the RL manifest.
    Mine(commands::mine::MineArgs),
    /// Mix relevant and irrelevant context pieces per record.
    BuildContextual(commands::contextual::ContextualArgs),
    /// Retrieve hotword candidates for a hypothesis.
    RetrieveHotwords(commands::hotwords::HotwordArgs),
    /// Mix speech with noise at sampled SNRs, with optional zero-padding.
    Augment(commands::augment::AugmentArgs),
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::SynthData(args) => commands::synth::run(args),
        Command::TrainGrpo(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Mine(args) => commands::mine::run(args),
        Command::BuildContextual(args) => commands::contextual::run(args),
        Command::RetrieveHotwords(args) => commands::hotwords::run(args),
        Command::Augment(args) => commands::augment::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("{}", failure.as_json_line());
            ExitCode::from(failure.exit_code())
        }
    }
}
