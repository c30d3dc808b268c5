//! `lesion`: extract embeddings, train the two task heads, evaluate them and
//! classify single images.
//!
//! Exit codes: 0 on success, 1 on a runtime or data error, 2 on a usage
//! error. Subcommands take no file locks; do not point two concurrent runs at
//! the same output file.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lesion_core::{LabelSchema, Task};

#[derive(Debug, Parser)]
#[command(name = "lesion", version, about = "Dermoscopic lesion classifiers on frozen CNN embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Embed every image in a directory and write a feature cache.
    Extract(ExtractArgs),
    /// Train one task head on a feature cache.
    Train(TrainArgs),
    /// Score both heads on a labelled feature cache.
    Eval(EvalArgs),
    /// Classify one image with both heads.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    /// Frozen ONNX network given by --model.
    Pretrained,
    /// Deterministic random projection, for tests and dry runs.
    Stub,
}

#[derive(Debug, Args)]
struct BackendArgs {
    #[arg(long, value_enum)]
    backend: BackendKind,
    /// ONNX model file, required for the pretrained backend.
    #[arg(long, required_if_eq("backend", "pretrained"))]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Plain-text `key = value` configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides LESION_SEED and the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    images: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also embed augmented variants of a seeded subset into this cache.
    #[arg(long)]
    augment_out: Option<PathBuf>,
    /// Write the augmented images as PNG files for inspection.
    #[arg(long, requires = "augment_out")]
    dump_augmented: Option<PathBuf>,
    /// Embedding workers (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    /// `malignancy` or `cell-origin`.
    #[arg(long)]
    task: Task,
    #[arg(long)]
    out: PathBuf,
    /// Training-curve CSV.
    #[arg(long)]
    log: PathBuf,
    /// Feature cache of augmented variants; ids look like `augmented:<kind>:<image_id>`.
    #[arg(long)]
    augmented_features: Option<PathBuf>,
    /// `canonical` or `isic2017`.
    #[arg(long, default_value = "canonical")]
    label_schema: LabelSchema,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    model_task1: PathBuf,
    #[arg(long)]
    model_task2: PathBuf,
    /// JSON report path.
    #[arg(long)]
    report: PathBuf,
    /// Directory for per-task `fpr,tpr` ROC CSVs.
    #[arg(long)]
    roc_dir: Option<PathBuf>,
    #[arg(long, default_value = "canonical")]
    label_schema: LabelSchema,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    model_task1: PathBuf,
    #[arg(long)]
    model_task2: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() -> ExitCode {
    // Usage errors exit with status 2 inside parse().
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict_image(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
