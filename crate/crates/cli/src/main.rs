mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Skeleton action recognition toolkit.
#[derive(Debug, Parser)]
#[command(name = "skelact", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Worker threads for parallel evaluation.
    #[arg(long, global = true, env = "SKELACT_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (manifest plus one JSON file per sequence).
    Synth(SynthArgs),
    /// Apply the Taylor transform to JSON sequences.
    Transform(TransformArgs),
    /// Train a model on the train split of a manifest.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a manifest split.
    Eval(EvalArgs),
    /// Per-class accuracy deltas between two reports.
    Compare(CompareArgs),
    /// Draw a skeleton frame or a confusion heatmap as SVG.
    #[command(subcommand)]
    Render(RenderCommand),
}

#[derive(Debug, Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "SKELACT_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// JSON file with synthesis settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Replace,
    Concat,
}

#[derive(Debug, Args)]
struct TransformArgs {
    /// Sequence JSON files.
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = 4)]
    block: usize,
    #[arg(long, default_value_t = 1)]
    step: usize,
    #[arg(long, default_value_t = 1)]
    order: usize,
    #[arg(long, value_enum, default_value = "replace")]
    mode: ModeArg,
    /// Also write per-joint motion magnitudes next to each output.
    #[arg(long)]
    motion: bool,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModelArg {
    Stgcn,
    Hyperformer,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InputArg {
    Original,
    Taylor,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "original")]
    input: InputArg,
    #[arg(long)]
    manifest: PathBuf,
    /// JSON file with optional `model`, `training` and `pipeline` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint path; defaults to `checkpoint.json` in $SKELACT_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch history CSV; defaults to `history.csv` next to the checkpoint.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Report name prefix; defaults to the checkpoint's input variant.
    #[arg(long)]
    tag: Option<String>,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Baseline report.
    baseline: PathBuf,
    /// Report compared against the baseline.
    candidate: PathBuf,
    #[arg(long, default_value_t = skelact_core::evaluation::DEFAULT_TOP_K)]
    top: usize,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Debug, Subcommand)]
enum RenderCommand {
    /// One frame of a sequence, optionally with Taylor motion circles.
    Skeleton(SkeletonArgs),
    /// Filtered confusion matrix of a report.
    Confusion(ConfusionArgs),
}

#[derive(Debug, Args)]
struct SkeletonArgs {
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long, default_value_t = 0)]
    frame: usize,
    #[arg(long, default_value_t = 0)]
    body: usize,
    /// Overlay motion magnitudes from a Taylor block of this many frames.
    #[arg(long)]
    taylor: bool,
    #[arg(long, default_value_t = 4)]
    block: usize,
    /// JSON render style; missing fields keep their defaults.
    #[arg(long)]
    style: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ConfusionArgs {
    #[arg(long)]
    report: PathBuf,
    /// Entries below this row percentage are blanked.
    #[arg(long, default_value_t = skelact_core::evaluation::DEFAULT_CONFUSION_THRESHOLD)]
    threshold: f64,
    #[arg(long)]
    style: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes of the exit-code contract.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<skelact_core::Error> for Failure {
    fn from(e: skelact_core::Error) -> Self {
        Failure::Data(e.into())
    }
}

fn data_error_json(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<skelact_core::Error>())
        .map(|e| e.kind())
        .unwrap_or("other");
    // some errors already print their source, so drop causes repeated verbatim
    let mut causes: Vec<String> = Vec::new();
    for cause in err.chain().map(|e| e.to_string()) {
        if !causes.last().is_some_and(|prev| prev.ends_with(&cause)) {
            causes.push(cause);
        }
    }
    serde_json::json!({
        "error": kind,
        "message": causes.join(": "),
        "causes": causes,
    })
    .to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(Failure::Data(err)) => {
            eprintln!("{}", data_error_json(&err));
            ExitCode::from(2)
        }
    }
}
