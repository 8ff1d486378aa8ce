//! `salcap`: synthetic data, training, decoding, traces, evaluation and
//! saliency statistics from the command line.
//!
//! Exit codes: 0 success, 1 invalid input or usage, 2 failure while running.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use salcap::attention::Variant;
use salcap::data_io::Split;
use salcap::optim::OptimizerKind;

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "salcap", version, about = "Saliency-aware image captioning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (features, saliency maps, manifest).
    GenSynth(GenSynthArgs),
    /// Train a captioner and write a checkpoint directory.
    Train(TrainArgs),
    /// Greedy-decode every image of a split to JSONL.
    Caption(CaptionArgs),
    /// Per-image attention traces for two-path models.
    Trace(TraceArgs),
    /// Score candidate captions against references.
    Evaluate(EvaluateArgs),
    /// Class hit rates and size/saliency statistics of saliency maps.
    AnalyzeSaliency(AnalyzeArgs),
    /// Compare backprop gradients with finite differences at tiny sizes.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    /// Generator spec JSON; built-in defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory; must be missing or empty unless --force.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec seed and SALCAP_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset manifest; overrides the config file.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Run config JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Checkpoint directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Overrides the config seed and SALCAP_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    grad_clip_norm: Option<f64>,
    #[arg(long)]
    max_caption_len: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    att_dim: Option<usize>,
    #[arg(long)]
    min_count: Option<usize>,
    /// Also save a checkpoint every N epochs under `epoch_NNNN/`.
    #[arg(long, default_value_t = 0)]
    checkpoint_every: usize,
    /// Allow writing into a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct CaptionArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Candidate captions, one `{"image_id", "caption"}` per line.
    #[arg(long)]
    out: PathBuf,
    /// Also write the split's references as `{"image_id", "references"}` lines.
    #[arg(long)]
    refs_out: Option<PathBuf>,
    /// Decoding steps, the end token included.
    #[arg(long, default_value_t = 21)]
    max_len: usize,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Only this split; every image when omitted.
    #[arg(long)]
    split: Option<Split>,
    /// Output directory for `<id>.csv` and `<id>_alpha.tnsr`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 21)]
    max_len: usize,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// `{"image_id", "caption"}` lines.
    #[arg(long)]
    candidates: PathBuf,
    /// `{"image_id", "references"}` lines.
    #[arg(long)]
    references: PathBuf,
    /// Report JSON; printed to stdout as well.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Second caption set; adds difference_pct.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Training captions; adds novelty_pct.
    #[arg(long)]
    train_captions: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    cider_multiplier: f64,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Pairs file naming the label table and the map pairs.
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long, default_value_t = salcap_salstats::DEFAULT_LOW_THRESHOLD)]
    threshold_low: u8,
    #[arg(long, default_value_t = salcap_salstats::DEFAULT_HIGH_THRESHOLD)]
    threshold_high: u8,
    /// Minimum number of images a class must appear in.
    #[arg(long, default_value_t = 500)]
    min_occ: usize,
    /// Share of a class's pixels that must be salient for a hit.
    #[arg(long, default_value_t = 0.0)]
    min_overlap_frac: f64,
    /// Also write one saliency row per labelled pixel.
    #[arg(long)]
    per_pixel: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[arg(long)]
    variant: Variant,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Per-parameter report JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenSynth(a) => commands::gen_synth(a),
        Command::Train(a) => commands::train(a),
        Command::Caption(a) => commands::caption(a),
        Command::Trace(a) => commands::trace(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::AnalyzeSaliency(a) => commands::analyze_saliency(a),
        Command::GradCheck(a) => commands::grad_check(a),
    };
    let (code, err) = match result {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => (1, e),
        Err(Failure::Runtime(e)) => (2, e),
    };
    eprintln!("error: {}", describe(&err));
    ExitCode::from(code)
}

/// The error chain joined with `: `, skipping causes already spelled out by
/// the message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !out.ends_with(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}
