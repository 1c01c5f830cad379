mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

/// Kiñit scale classification: corpus tools, feature extraction, EKM training,
/// and experiment reports.
#[derive(Debug, Parser)]
#[command(name = "kinit", version)]
pub struct Cli {
    /// Base seed; split, init, shuffle, and synth seeds are derived from it.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Byte-identical artifacts across reruns (wall-clock columns left empty).
    #[arg(
        long,
        global = true,
        default_value_t = true,
        num_args = 0..=1,
        default_missing_value = "true",
        action = ArgAction::Set
    )]
    pub deterministic: bool,

    /// Default output directory for commands that write artifacts.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic pentatonic corpus and its manifest.
    Synth(SynthArgs),
    /// Build a manifest from a folder of labeled WAV files.
    Scan(ScanArgs),
    /// Assign a stratified train/val/test split to a manifest.
    Split(SplitArgs),
    /// Segment every clip and write one feature file per segment.
    Extract(ExtractArgs),
    /// Train EKM on extracted features.
    Train(TrainArgs),
    /// Evaluate a trained model on extracted features.
    Eval(EvalArgs),
    /// Judge agreement (Fleiss kappa) from a votes CSV.
    Kappa(KappaArgs),
    /// Run experiment 1 (features), 2 (segment lengths), or 3 (timing).
    Experiment(ExperimentArgs),
    /// Print the tables in an experiment output directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 25)]
    pub per_class: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Folder searched recursively for `<Kinit><n>.wav` files.
    #[arg(long)]
    pub root: PathBuf,
    /// Manifest path (default `<root>/manifest.csv`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val: f64,
    #[arg(long, default_value_t = 0.2)]
    pub test: f64,
    /// Output manifest (default: overwrite the input).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "mfcc")]
    pub kind: kinit::features::FeatureKind,
    /// Segment length in seconds.
    #[arg(long, default_value_t = 3.0)]
    pub len: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of `.feat` files from `extract`.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, default_value_t = 250)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Keep the weights of the best validation epoch.
    #[arg(long)]
    pub keep_best_val: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Which split to evaluate: train, val, test, or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// CSV with header `clip_id,judge1,...,judgeN`.
    #[arg(long)]
    pub votes: PathBuf,
    #[arg(long, default_value = "fleiss")]
    pub variant: kinit::annotation::KappaVariant,
    /// Drop clips without an accepted majority label before computing kappa.
    #[arg(long)]
    pub exclude_rejected: bool,
    #[arg(long, default_value_t = kinit::annotation::MAJORITY_THRESHOLD)]
    pub threshold: usize,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// 1 = feature kinds, 2 = segment lengths, 3 = training time.
    #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
    pub which: u8,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 250)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment output directory containing `table.csv`.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

/// Bad input from the user; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<kinit::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
