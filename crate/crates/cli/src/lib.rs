//! Command-line interface: cost reports, synthetic data, training,
//! inference, evaluation and knowledge-token distillation.

mod commands;
mod fileconfig;

use clap::{Parser, Subcommand};

pub use fileconfig::{load_file_config, resolve_model, DataSection, FileConfig};

#[derive(Parser)]
#[command(
    name = "plainpose",
    version,
    about = "Plain-ViT pose estimation: train, evaluate, and cost-model desk-scale models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Analytic parameter / FLOP / activation-memory report for a preset.
    Cost(commands::cost::CostArgs),
    /// Generate a synthetic keypoint dataset (VTPT images + COCO-style JSON).
    Synth(commands::synth::SynthArgs),
    /// Train a model from a TOML config.
    Train(commands::train::TrainArgs),
    /// Run inference on a VTPT image and emit keypoints JSON.
    Infer(commands::infer::InferArgs),
    /// Evaluate predictions against ground truth (OKS AP/AR or PCKh).
    Eval(commands::eval::EvalArgs),
    /// Learn a knowledge token on a frozen teacher and train a student.
    Distill(commands::distill::DistillArgs),
}

/// Entry point shared by the binary and the integration tests.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help text
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.cmd {
        Cmd::Cost(args) => commands::cost::run(args),
        Cmd::Synth(args) => commands::synth::run(args),
        Cmd::Train(args) => commands::train::run(args),
        Cmd::Infer(args) => commands::infer::run(args),
        Cmd::Eval(args) => commands::eval::run(args),
        Cmd::Distill(args) => commands::distill::run(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
