//! `textsr`: train, run, evaluate and time the text super-resolution network.
//!
//! Exit codes: 0 success, 2 bad usage or input, 3 numerical failure during
//! training. `TEXTSR_THREADS` caps worker threads (unset or 0 = all cores).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

const EXIT_INPUT: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "textsr",
    version,
    about = "Edge-aware super-resolution for text images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train from a folder of images, writing a checkpoint after every epoch.
    Train(TrainArgs),
    /// Upscale one image.
    SuperResolve(SuperResolveArgs),
    /// PSNR/SSIM/latency over a folder of HR images (LR made by bicubic downsampling).
    Eval(EvalArgs),
    /// Time single-image inference on synthetic noise.
    Bench(BenchArgs),
    /// Canny edge map of an image, reconstructed by the model and by bicubic upsampling.
    EdgeDemo(EdgeDemoArgs),
    /// Write a freshly initialised model file.
    Init(InitArgs),
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Folder of PNG/JPEG training images (searched recursively; a manifest.txt overrides).
    #[arg(long)]
    data: PathBuf,
    /// Upscaling factor.
    #[arg(long, value_parser = parse_scale)]
    scale: usize,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run exactly this many epochs instead of halving the rate until it drops below 2e-5 (7 epochs).
    #[arg(long)]
    epochs: Option<u64>,
    /// Patch stride in HR pixels [default: 16 * scale, non-overlapping].
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long, default_value_t = 20)]
    batch: usize,
    /// Continue from this checkpoint model file (its .state file must sit beside it).
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Run every step on one thread.
    #[arg(long)]
    single_threaded: bool,
}

#[derive(Args, Debug)]
struct SuperResolveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Pixels removed from each border before scoring [default: the model's scale].
    #[arg(long)]
    shave: Option<usize>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Method name for the table row.
    #[arg(long, default_value = "textsr")]
    label: String,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, default_value_t = 128)]
    height: usize,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    iters: u64,
    #[arg(long, default_value_t = 5)]
    warmup: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EdgeDemoArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Hysteresis low threshold on the normalised gradient magnitude.
    #[arg(long, default_value_t = 0.1)]
    low: f32,
    /// Hysteresis high threshold on the normalised gradient magnitude.
    #[arg(long, default_value_t = 0.2)]
    high: f32,
}

#[derive(Args, Debug)]
struct InitArgs {
    #[arg(long, value_parser = parse_scale)]
    scale: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Zero the last layer so the model reproduces bicubic upsampling exactly.
    #[arg(long)]
    zero_residual: bool,
}

fn parse_scale(s: &str) -> Result<usize, String> {
    match s {
        "2" => Ok(2),
        "4" => Ok(4),
        _ => Err(format!("scale must be 2 or 4, got {s}")),
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("TEXTSR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| {
        anyhow::anyhow!("TEXTSR_THREADS must be a non-negative integer, got {raw:?}")
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<textsr::Error>(),
            Some(textsr::Error::Numerical { .. })
        )
    });
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train(a) => commands::train(a),
        Command::SuperResolve(a) => commands::super_resolve(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a),
        Command::EdgeDemo(a) => commands::edge_demo(a),
        Command::Init(a) => commands::init(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
