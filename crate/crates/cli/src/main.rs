//! `mbf`: fixtures, fitting, metrics, meshing, training, generation and
//! latent edits from the command line.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mbf_core::fixtures::FixtureKind;

#[derive(Debug, Parser)]
#[command(name = "mbf", version, about = "Metaball descriptors for 3D particle shapes")]
pub struct Cli {
    /// Worker threads; `MBF_THREADS` takes precedence. Defaults to the
    /// number of logical cores.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Root seed of every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic voxel grid.
    Fixture(FixtureArgs),
    /// Fit metaball models to voxel grids.
    Fit(FitArgs),
    /// Shape metrics of models (.mball) or voxel grids (.vgrid, .txt) as CSV.
    Metrics(MetricsArgs),
    /// Triangulate a model or a voxel grid to OBJ or STL.
    Mesh(MeshArgs),
    /// Train the autoencoder on a set of models.
    Train(TrainArgs),
    /// Sample new particles from trained weights.
    Generate(GenerateArgs),
    /// Encode, decode and edit latent vectors.
    #[command(subcommand)]
    Latent(LatentCommand),
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// ball, two_balls, ellipsoid, angular or concave.
    #[arg(long)]
    pub kind: FixtureKind,
    /// Main radius in voxels.
    #[arg(long)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pub voxel_size: f64,
    /// Second ball or bite radius over the main radius.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Second ball or bite center distance over the main radius.
    #[arg(long)]
    pub offset: Option<f64>,
    /// Edge rounding of the angular polytope over the main radius.
    #[arg(long)]
    pub rounding: Option<f64>,
    /// Grid size: one value for a cube or three comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    pub dims: Vec<usize>,
    /// `.txt` writes the sparse text format, anything else binary.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Voxel grids (.vgrid binary or .txt sparse).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Control points per model.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2000)]
    pub generations: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    /// Share of the generations run with Adam.
    #[arg(long, default_value_t = 0.8)]
    pub adam_fraction: f64,
    /// Weight floor relative to the squared hull radius.
    #[arg(long, default_value_t = 1e-8)]
    pub k_floor: f64,
    /// Receives `<stem>.mball`, `<stem>.report.txt` and `fit.csv`.
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    pub inputs: Vec<PathBuf>,
    /// Marching grid cells across the model's bounding box.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// `.obj` writes OBJ, anything else binary STL.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training models (.mball), all with the same number of points.
    pub inputs: Vec<PathBuf>,
    /// Train on this many random models instead of files.
    #[arg(long, conflicts_with = "inputs")]
    pub synthetic: Option<usize>,
    /// Control points of each random model.
    #[arg(long, default_value_t = 5)]
    pub synthetic_points: usize,
    /// Also write the random models to this directory.
    #[arg(long, requires = "synthetic")]
    pub save_dataset: Option<PathBuf>,
    /// Weights file (.mbvae).
    #[arg(long)]
    pub output: PathBuf,
    /// Per-step loss log (CSV).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// Passes over the augmented set; 0 runs twice the warmup.
    #[arg(long, default_value_t = 0)]
    pub epochs: usize,
    /// Exact number of steps, overriding `--epochs`.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, default_value_t = 5)]
    pub rotations: usize,
    #[arg(long, default_value_t = 50)]
    pub shuffles: usize,
    #[arg(long, default_value_t = 0.01)]
    pub leaky_slope: f64,
    /// Steps over which the KL weight ramps from 0 to 1.
    #[arg(long, default_value_t = 10_000)]
    pub warmup: u64,
    /// Radius the dataset is scaled to before training.
    #[arg(long, default_value_t = mbf_core::vae::DEFAULT_TARGET_RADIUS)]
    pub target_radius: f64,
    /// Encoder widths, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub encoder: Option<Vec<usize>>,
    #[arg(long, default_value_t = 128)]
    pub latent: usize,
    /// Decoder hidden widths, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub decoder: Option<Vec<usize>>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Weight floor relative to the squared coordinate scale.
    #[arg(long, default_value_t = 1e-8)]
    pub k_floor: f64,
    /// File name prefix of the generated particles.
    #[arg(long, default_value = "gen")]
    pub prefix: String,
    /// Receives the `.mball` and `.latent` files and `index.csv`.
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum LatentCommand {
    /// Posterior mean of a model.
    Encode {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Model of a latent vector.
    Decode {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        mesh: MeshOut,
    },
    /// Models along the line between two latent vectors.
    Interp {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        z1: PathBuf,
        #[arg(long)]
        z2: PathBuf,
        /// Comma-separated positions in [0, 1].
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        alphas: Vec<f64>,
        #[arg(long)]
        output_dir: PathBuf,
        /// Also write an OBJ mesh of each model.
        #[arg(long)]
        meshes: bool,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
    },
    /// Signed sum of latent vectors: z1 + z2 + plus... - minus...
    Add {
        #[arg(long)]
        z1: Option<PathBuf>,
        #[arg(long)]
        z2: Option<PathBuf>,
        #[arg(long)]
        plus: Vec<PathBuf>,
        #[arg(long)]
        minus: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        decode: DecodeOut,
    },
    /// Adds Gaussian noise of standard deviation `sigma`.
    Perturb {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        decode: DecodeOut,
    },
}

#[derive(Debug, Args)]
pub struct MeshOut {
    /// Also write a mesh (.obj or .stl) of the decoded model.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
}

#[derive(Debug, Args)]
pub struct DecodeOut {
    /// Weights used to decode the result.
    #[arg(long, requires = "decode_output")]
    pub weights: Option<PathBuf>,
    /// Decoded model (.mball).
    #[arg(long, requires = "weights")]
    pub decode_output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mbf: {f}");
            ExitCode::from(f.code())
        }
    }
}
