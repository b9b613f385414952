//! `spectag`: synthesise phantom datasets, train, evaluate and study
//! confidence-filtered superpixel classification.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spectag_core::confidence::ConfidenceMetric;
use spectag_core::{Error, ErrorKind};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "spectag", version, about = "Uncertainty-aware superpixel classification and image tagging")]
struct Cli {
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic phantom dataset and its manifest.
    Synth(SynthArgs),
    /// Grid-search and train a model on the training split.
    Train(TrainArgs),
    /// Evaluate a model on the test split.
    Eval(EvalArgs),
    /// Leave-one-organ-out low-confidence study.
    Loo(LooArgs),
    /// Threshold sweep only.
    Sweep(SweepArgs),
    /// Dump per-superpixel feature vectors as CSV.
    Features(FeaturesArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Gc,
    Ppci,
    Max,
}

impl From<MetricArg> for ConfidenceMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Gc => ConfidenceMetric::Gc,
            MetricArg::Ppci => ConfidenceMetric::Ppci,
            MetricArg::Max => ConfidenceMetric::Max,
        }
    }
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Pipeline configuration (TOML); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Confidence metric, overriding the configuration.
    #[arg(long, value_enum)]
    metric: Option<MetricArg>,
    /// Confidence threshold, overriding the configuration.
    #[arg(long)]
    tau: Option<f64>,
    /// Seed for fold assignment and calibration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Dataset recipe (TOML); defaults to six organs, 29 train / 28 test images.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output model file; the CV table is written next to it.
    #[arg(long)]
    model: PathBuf,
    /// Also train an RGB model, saved as `<model stem>.rgb.json`.
    #[arg(long)]
    compare_rgb: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    model: PathBuf,
    /// Output directory for reports and overlays.
    #[arg(long)]
    out: PathBuf,
    /// Also evaluate the RGB model trained with `train --compare-rgb`.
    #[arg(long)]
    compare_rgb: bool,
}

#[derive(Args, Debug)]
struct LooArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Take C and gamma from this model instead of running a grid search.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FeaturesArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    /// Dump RGB instead of multispectral features.
    #[arg(long)]
    compare_rgb: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) => match e.kind() {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Data => EXIT_DATA,
            ErrorKind::Numerical => EXIT_NUMERICAL,
        },
        None => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPECTAG_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Loo(a) => commands::loo(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Features(a) => commands::features(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
