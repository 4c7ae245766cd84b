//! Command-line flags. Every flag is optional and overrides the matching
//! configuration-file value.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sna_core::model::Activation;
use sna_core::training::{Optimiser, TargetScaling};
use sna_core::variational::Formulation;

use crate::config::{parse_enum, GeneratorKind, PdeProblem, Suite};

#[derive(Debug, Parser)]
#[command(name = "sna", version, about = "Separable spline models: data generation, fitting, inversion and PDE solves")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "SNA_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream in the run.
    #[arg(long, global = true, env = "SNA_SEED")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "SNA_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a benchmark function on a Latin hypercube design.
    GenData(GenDataArgs),
    /// Fit a CP model to a dataset.
    Fit(FitArgs),
    /// Find inputs at which a saved model hits a target value.
    Invert(InvertArgs),
    /// Solve a PDE with a separable trial space.
    SolvePde(SolvePdeArgs),
    /// Error against rank and resolution for a PDE.
    Scaling(ScalingArgs),
    /// Run the reference benchmark suites.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// borehole or sobol_g.
    #[arg(long, value_parser = parse_enum::<GeneratorKind>, env = "SNA_GENERATOR")]
    pub generator: Option<GeneratorKind>,
    #[arg(long, env = "SNA_N_SAMPLES")]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// min_max, max_abs or none.
    #[arg(long, value_parser = parse_enum::<TargetScaling>)]
    pub target_scaling: Option<TargetScaling>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, env = "SNA_RANK")]
    pub rank: Option<usize>,
    /// Interior spline cells per dimension.
    #[arg(long)]
    pub cells: Option<usize>,
    /// Spline order.
    #[arg(long)]
    pub order: Option<usize>,
    /// identity, tanh or softplus.
    #[arg(long, value_parser = parse_enum::<Activation>)]
    pub activation: Option<Activation>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// adam, lbfgs, adam_then_lbfgs, als or als_then_lbfgs.
    #[arg(long, value_parser = parse_enum::<Optimiser>)]
    pub optimiser: Option<Optimiser>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Adam epochs or ALS sweeps.
    #[arg(long, env = "SNA_MAX_EPOCHS")]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub lbfgs_iters: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l2_penalty: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV.
    #[arg(long, env = "SNA_DATA")]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    /// Model JSON written by `fit`.
    #[arg(long, env = "SNA_MODEL")]
    pub model: Option<PathBuf>,
    /// Target in model output units.
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<f64>,
    #[arg(long)]
    pub n_seeds: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub target_tol: Option<f64>,
}

/// Plume problem overrides.
#[derive(Debug, Args)]
pub struct PlumeArgs {
    /// Spatial dimensions of the plume.
    #[arg(long)]
    pub n_space: Option<usize>,
    /// One value fixes ω; `lo,hi` makes it a coordinate.
    #[arg(long, value_delimiter = ',')]
    pub omega: Option<Vec<f64>>,
    /// One value fixes D; `lo,hi` makes it a coordinate.
    #[arg(long, value_delimiter = ',')]
    pub diffusivity: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SolvePdeArgs {
    /// advection_diffusion, poisson, heat or burgers.
    #[arg(long, value_parser = parse_enum::<PdeProblem>, env = "SNA_PROBLEM")]
    pub problem: Option<PdeProblem>,
    /// least_squares or energy (Poisson only).
    #[arg(long, value_parser = parse_enum::<Formulation>)]
    pub formulation: Option<Formulation>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Interior spline cells per dimension.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    #[arg(long)]
    pub tikhonov_lambda: Option<f64>,
    #[command(flatten)]
    pub plume: PlumeArgs,
    /// Burgers sine modes.
    #[arg(long)]
    pub n_x: Option<usize>,
    /// Burgers time modes.
    #[arg(long)]
    pub n_t: Option<usize>,
    /// Burgers time window.
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Burgers optimiser iterations.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Burgers error grid points per axis.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub quadrature: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScalingArgs {
    /// advection_diffusion, poisson or heat.
    #[arg(long, value_parser = parse_enum::<PdeProblem>)]
    pub problem: Option<PdeProblem>,
    #[arg(long, value_delimiter = ',', env = "SNA_RANKS")]
    pub ranks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', env = "SNA_RESOLUTIONS")]
    pub resolutions: Option<Vec<usize>>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// Start every rank from random factors.
    #[arg(long)]
    pub cold_start: bool,
    #[command(flatten)]
    pub plume: PlumeArgs,
    #[arg(long)]
    pub quadrature: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// borehole, sobol_g, witness, burgers or all.
    #[arg(long, value_parser = parse_enum::<Suite>, env = "SNA_SUITE")]
    pub suite: Option<Suite>,
    /// Sample count for the regression suites.
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
}
