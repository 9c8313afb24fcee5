//! `ocrconf`: align OCR output with ground truth, report quality and
//! calibration statistics, and train box-level error detectors.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "ocrconf", version, about = "OCR confidence toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
enum Command {
    /// Align OCR boxes with ground-truth boxes.
    Align(AlignArgs),
    /// Dataset statistics: CER, BER, ECE, components and unmatched boxes.
    Metrics(MetricsArgs),
    /// Simulate OCR noise over a plain-text corpus.
    Noisegen(NoisegenArgs),
    /// Train and evaluate an error detector over seeded repeats.
    Train(TrainArgs),
    /// Fixed-alpha sweep of the confidence-aware detector.
    Sweep(SweepArgs),
    /// Write a synthetic aligned dataset with calibrated confidences.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Serialize)]
struct AlignArgs {
    /// OCR results (JSON file or directory).
    #[arg(long)]
    ocr: PathBuf,
    /// Ground truth (file or directory).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "generic_json", value_parser = ["generic_json", "funsd_json", "sroie_txt", "cord_json"])]
    gt_format: String,
    /// Minimum coverage for a box match.
    #[arg(long, default_value_t = 0.10)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct MetricsArgs {
    /// Aligned dataset file.
    #[arg(long)]
    aligned: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    /// CER over all characters instead of the per-document mean.
    #[arg(long)]
    pooled: bool,
    /// Compare raw text instead of whitespace-stripped lowercase text.
    #[arg(long)]
    no_normalize: bool,
    /// Dataset label in the report.
    #[arg(long)]
    name: Option<String>,
    /// Machine-readable record (JSON lines).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct NoisegenArgs {
    /// Plain-text corpus, one sequence per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8000)]
    max_vocab: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelTag {
    Baseline,
    Plain,
    Confbert,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CommonTrainArgs {
    /// Aligned dataset file.
    #[arg(long)]
    aligned: PathBuf,
    /// Split specification (JSON); defaults to a seeded 80/10/10 split.
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Seed of the first repeat; repeat i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5e-5)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    max_epochs: usize,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Loss weight of the error class.
    #[arg(long, default_value_t = 1.0)]
    positive_class_weight: f64,
    /// Run masked-token and noise pretraining on training GT text first.
    #[arg(long)]
    pretrain: bool,
    #[arg(long, default_value_t = 2500)]
    pretrain_steps: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    ffn_dim: usize,
    #[arg(long, default_value_t = 256)]
    max_seq_len: usize,
    #[arg(long, default_value_t = 3.0)]
    embedding_init_std: f64,
    /// Worker threads for repeats; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory for records.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelTag,
    /// Pin alpha (confbert only); otherwise alpha is trained.
    #[arg(long)]
    alpha: Option<f64>,
    /// Records of an earlier train run to test significance against.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Write the selected model of every repeat here.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[command(flatten)]
    common: CommonTrainArgs,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long, default_value_t = 0.1)]
    grid_step: f64,
    #[command(flatten)]
    common: CommonTrainArgs,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 150)]
    train_docs: usize,
    #[arg(long, default_value_t = 20)]
    val_docs: usize,
    #[arg(long, default_value_t = 40)]
    test_docs: usize,
    #[arg(long, default_value_t = 20)]
    boxes_per_doc: usize,
    #[arg(long, default_value_t = 0.4)]
    garbled_fraction: f64,
    /// Also write the matching explicit split specification.
    #[arg(long)]
    split_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", commands::describe(&err));
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
