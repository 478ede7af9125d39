//! `ssc`: ground-truth generation, synthetic data, training, inference and evaluation for
//! joint point-cloud segmentation and semantic scene completion.

mod data;
mod error;
mod eval;
mod fsutil;
mod gen_gt;
mod infer;
mod synth;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "ssc", version, about = "Joint point-cloud segmentation and scene completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build ground-truth volumes for every frame of a KITTI-layout sequence.
    GenGt(gen_gt::GenGtArgs),
    /// Write a synthetic dataset.
    Synth(synth::SynthArgs),
    /// Train a model and write per-epoch checkpoints and a step log.
    Train(train::TrainArgs),
    /// Label the points of one scan.
    Infer(infer::InferArgs),
    /// Score predictions or a checkpoint.
    Eval(eval::EvalArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::GenGt(a) => gen_gt::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Train(a) => train::run(a),
        Command::Infer(a) => infer::run(a),
        Command::Eval(a) => eval::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssc: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
