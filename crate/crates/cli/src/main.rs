//! `mapforge` batch pipeline: denoising groups, BEV mask targets, matching,
//! Chamfer AP evaluation and kernel benchmarks over JSONL scene files.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mapforge::ClassLabel;

mod bench;
mod commands;
mod records;
mod synth;

#[derive(Parser)]
#[command(name = "mapforge", version = mapforge::VERSION, about = "Vectorized HD-map toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write physical-prior denoising groups for every frame.
    GenNoise(GenNoiseArgs),
    /// Write per-class BEV masks (JSON header + raw bytes) for every frame.
    Rasterize(RasterizeArgs),
    /// Chamfer AP evaluation of predictions against ground truth.
    Eval(EvalArgs),
    /// Optimal one-to-one matching of predictions to ground truth per frame.
    Match(MatchArgs),
    /// Throughput of a kernel on synthetic data.
    Bench(BenchArgs),
    /// Aggregate features for the elements of a synthetic frame.
    Project(ProjectArgs),
    /// Generate a synthetic scene file.
    Synth(SynthArgs),
}

#[derive(clap::Args)]
pub struct GenNoiseArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 15.0)]
    pub rot_max_deg: f64,
    #[arg(long, default_value_t = 1.0)]
    pub trans_max: f64,
    #[arg(long, default_value_t = 0.9)]
    pub scale_min: f64,
    #[arg(long, default_value_t = 1.1)]
    pub scale_max: f64,
    #[arg(long, default_value_t = 0.9)]
    pub curv_min: f64,
    #[arg(long, default_value_t = 1.1)]
    pub curv_max: f64,
    #[arg(long, default_value_t = 1)]
    pub groups: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(clap::Args)]
pub struct RasterizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// x_min,x_max,y_min,y_max in meters.
    #[arg(long, default_value = "-15,15,-30,30", allow_hyphen_values = true)]
    pub range: String,
    #[arg(long, default_value_t = 0.15)]
    pub resolution: f64,
    #[arg(long, default_value_t = 0.5)]
    pub half_width: f64,
    /// Dilate polygon outlines instead of filling them.
    #[arg(long)]
    pub no_fill: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gt: PathBuf,
    /// Scene file whose `predictions` are evaluated.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value = "0.5,1.0,1.5")]
    pub thresholds: String,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long, default_value = "ped_crossing,divider,boundary")]
    pub classes: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct MatchArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub w_cls: f64,
    #[arg(long, default_value_t = 5.0)]
    pub w_pts: f64,
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Suite {
    Raster,
    Eval,
    Dfa,
}

#[derive(clap::Args)]
pub struct BenchArgs {
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Number of frames (raster, eval) or keypoints (dfa).
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

#[derive(clap::Args)]
pub struct ProjectArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 6)]
    pub views: usize,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, default_value_t = 8)]
    pub channels: usize,
    /// Keypoints per element.
    #[arg(long, default_value_t = 20)]
    pub points: usize,
    /// Keypoint height in meters.
    #[arg(long, default_value_t = 0.0)]
    pub z: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PredMode {
    /// No prediction field.
    None,
    /// Ground truth copied with confidence 1.
    Copy,
    /// Shifted copies plus decoys with varied confidence.
    Noisy,
}

#[derive(clap::Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub frames: usize,
    #[arg(long, default_value_t = 4)]
    pub scenes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = PredMode::None)]
    pub predictions: PredMode,
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?} in {s:?}")))
        .collect()
}

pub fn parse_classes(s: &str) -> Result<Vec<ClassLabel>> {
    s.split(',')
        .map(|t| t.trim().parse::<ClassLabel>().map_err(anyhow::Error::from))
        .collect()
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("MAPFORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .with_context(|| format!("MAPFORGE_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        bail!("MAPFORGE_THREADS must be at least 1");
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("cannot configure worker pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::GenNoise(a) => commands::gen_noise(&a),
        Command::Rasterize(a) => commands::rasterize(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Match(a) => commands::match_frames(&a),
        Command::Bench(a) => bench::bench(&a),
        Command::Project(a) => bench::project(&a),
        Command::Synth(a) => synth::synth(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
