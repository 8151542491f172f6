//! `ibi`: synthesize scenes, register multi-instance correspondences,
//! score the results and run ablation grids.

mod ablate;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ibi_core::pipeline::{SeedMode, SolverMode, ValidationMode};

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "IBI_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "ibi", version, about = "Instance-by-instance multi-instance point cloud registration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene with ground truth and correspondences.
    Synth(SynthArgs),
    /// Register every instance of a model in a scene from correspondences.
    Register(RegisterArgs),
    /// Score registration results against ground truth.
    Evaluate(EvaluateArgs),
    /// Run a configuration grid over a fixture directory.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of model instances placed in the scene (1 to 20).
    #[arg(long)]
    pub instances: usize,
    /// Fraction of correspondences that are outliers, in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub outlier_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
    /// ASCII PLY model; the builtin shape is used when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub model_points: usize,
    #[arg(long, default_value_t = 128)]
    pub clutter: usize,
    #[arg(long, default_value_t = 20)]
    pub inliers: usize,
    /// Inlier noise standard deviation in model resolutions.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Minimum instance center distance in model diameters.
    #[arg(long, default_value_t = 1.0)]
    pub min_separation: f64,
    /// Write this many scenes into numbered subdirectories, seeds `seed..seed+N`.
    #[arg(long)]
    pub scenes: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Synthetic,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValidationArg {
    Global,
    Local,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    Gsac,
    Ransac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeedModeArg {
    Gtm,
    Nnsr,
}

impl From<ValidationArg> for ValidationMode {
    fn from(v: ValidationArg) -> Self {
        match v {
            ValidationArg::Global => ValidationMode::Global,
            ValidationArg::Local => ValidationMode::Local,
            ValidationArg::None => ValidationMode::None,
        }
    }
}

impl From<SolverArg> for SolverMode {
    fn from(v: SolverArg) -> Self {
        match v {
            SolverArg::Gsac => SolverMode::Gsac,
            SolverArg::Ransac => SolverMode::Ransac,
        }
    }
}

impl From<SeedModeArg> for SeedMode {
    fn from(v: SeedModeArg) -> Self {
        match v {
            SeedModeArg::Gtm => SeedMode::Gtm,
            SeedModeArg::Nnsr => SeedMode::Nnsr,
        }
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub corrs: PathBuf,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
    /// JSON object overriding fields of the preset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Synthetic)]
    pub preset: Preset,
    #[arg(long, value_enum)]
    pub validation: Option<ValidationArg>,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long, value_enum)]
    pub seed_mode: Option<SeedModeArg>,
    /// Overrides `rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Poses file; repeat once per scene pair, in the same order as `--gt`.
    #[arg(long, required = true)]
    pub poses: Vec<PathBuf>,
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
    /// Rotation error bound for a hit, degrees.
    #[arg(long, default_value_t = 15.0)]
    pub rre_max: f64,
    /// Translation error bound for a hit, model resolutions.
    #[arg(long, default_value_t = 10.0)]
    pub rte_max: f64,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Directory of scene fixtures as written by `synth --scenes`.
    #[arg(long)]
    pub fixtures: PathBuf,
    /// Grid specification JSON.
    #[arg(long)]
    pub grid: PathBuf,
    /// Output CSV path; defaults to `ablation.csv` in the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Synthetic)]
    pub preset: Preset,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Register(a) => commands::register(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Ablate(a) => ablate::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ibi: {e}");
            e.exit_code()
        }
    }
}
