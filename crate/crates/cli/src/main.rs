//! `fofkit` command-line front end.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "fofkit", version, about = "Fourier occupancy field toolkit")]
struct Cli {
    /// TOML pipeline configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a watertight mesh into a FOF grid.
    Encode(EncodeArgs),
    /// Decode a FOF grid into a mesh.
    Decode(DecodeArgs),
    /// Embed 24 body joints as sphere FOF blocks.
    EmbedJoints(EmbedArgs),
    /// Rebuild a mesh from several refined yaw views.
    Recarve(RecarveArgs),
    /// Render turntable normal maps or shaded views.
    Render(RenderArgs),
    /// Compare two meshes or two grids.
    Metrics(MetricsArgs),
    /// Run quick built-in checks.
    Selftest,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub iso: Option<f64>,
    /// Damp ringing with Lanczos factors.
    #[arg(long)]
    pub lanczos: bool,
    /// Keep the mesh in the normalized frame even if a frame sidecar exists.
    #[arg(long)]
    pub normalized: bool,
    /// Also write the decoded occupancy grid.
    #[arg(long)]
    pub occupancy_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Joints JSON in the normalized frame.
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub channels_per_joint: Option<usize>,
    /// Sphere radius in normalized units.
    #[arg(long, conflicts_with = "radius_cm")]
    pub radius: Option<f64>,
    /// Sphere radius in centimetres, converted with `--frame`.
    #[arg(long, requires = "frame")]
    pub radius_cm: Option<f64>,
    /// Frame sidecar written by `encode`.
    #[arg(long)]
    pub frame: Option<PathBuf>,
    /// Auxiliary condition PNG appended after the joint blocks.
    #[arg(long, requires = "condition_out")]
    pub aux: Option<PathBuf>,
    /// Writes the concatenated condition grid and `<path>.blocks.json`.
    #[arg(long)]
    pub condition_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RecarveArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub iso: Option<f64>,
    /// Comma-separated yaw angles (`pi/2`, `90deg`, `1.2`); empty for none.
    #[arg(long)]
    pub views: Option<String>,
    /// Comma-separated weights, canonical view first. Defaults to equal.
    #[arg(long)]
    pub weights: Option<String>,
    /// `identity`, `band-zero` or `extern:<dir>`.
    #[arg(long)]
    pub refiner: Option<String>,
    #[arg(long)]
    pub band_low: Option<usize>,
    /// Seconds to wait for each external response.
    #[arg(long)]
    pub extern_timeout: Option<f64>,
    /// Writes every view's FOF as `view_<k>.fof`.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    #[arg(long)]
    pub occupancy_out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ModeArg {
    Normal,
    Shading,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    pub input: PathBuf,
    /// Output directory for `view_000.png` and so on.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 18)]
    pub views: usize,
    /// Yaw step in degrees.
    #[arg(long, default_value_t = 20.0)]
    pub interval: f64,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Normal)]
    pub mode: ModeArg,
    /// Render the mesh as stored instead of normalizing it first.
    #[arg(long)]
    pub raw: bool,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    /// Voxel resolution for mesh IoU.
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    /// Depth samples when a FOF grid must be decoded.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub iso: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mesh IoU in a normalized frame shared by both meshes.
    #[arg(long)]
    pub margin: Option<f64>,
}

fn setup_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("FOFKIT_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::format(format!(
                "FOFKIT_THREADS={value:?} is not a positive integer"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::format(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    setup_threads()?;
    let config = match &cli.config {
        Some(path) => config::PipelineConfig::load(path)?,
        None => config::PipelineConfig::default(),
    };
    match cli.command {
        Command::Encode(args) => commands::encode(args, config),
        Command::Decode(args) => commands::decode(args, config),
        Command::EmbedJoints(args) => commands::embed_joints(args, config),
        Command::Recarve(args) => commands::recarve(args, config),
        Command::Render(args) => commands::render(args, config),
        Command::Metrics(args) => commands::metrics(args, config),
        Command::Selftest => commands::selftest(),
        Command::Config => {
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
