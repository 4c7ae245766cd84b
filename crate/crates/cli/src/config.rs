//! Run configuration. A TOML file supplies the base values, flags and
//! `SNA_*` environment variables override it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sna_core::bench::{sobol_g_default_a, BoreholeSpec, Generator, SobolGSpec, BOREHOLE_RANGES};
use sna_core::inversion::InversionConfig;
use sna_core::model::Activation;
use sna_core::training::{TargetScaling, TrainConfig};
use sna_core::variational::problem::SineMode;
use sna_core::variational::{AdvectionDiffusionConfig, AlsConfig, BurgersConfig, Formulation, ScalingConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub invert: InvertConfig,
    pub inversion: InversionConfig,
    pub pde: PdeConfig,
    pub als: AlsConfig,
    pub advection: AdvectionDiffusionConfig,
    pub poisson: PoissonConfig,
    pub burgers: BurgersConfig,
    pub scaling: ScalingConfig,
    pub benchmark: BenchmarkConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("sna-out"),
            model: ModelConfig::default(),
            data: DataConfig::default(),
            train: TrainConfig::default(),
            invert: InvertConfig::default(),
            inversion: InversionConfig::default(),
            pde: PdeConfig::default(),
            als: AlsConfig::default(),
            advection: AdvectionDiffusionConfig::default(),
            poisson: PoissonConfig::default(),
            burgers: BurgersConfig::default(),
            scaling: ScalingConfig::default(),
            benchmark: BenchmarkConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        if !path.is_file() {
            return Err(CliError::missing_input("config file", path));
        }
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Fan the run seed out to every component.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.inversion.seed = self.seed;
        self.als.seed = self.seed;
        self.scaling.seed = self.seed;
    }
}

/// CP model hyperparameters for `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub rank: usize,
    /// Interior cells per dimension.
    pub cells: usize,
    /// Spline order.
    pub order: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { rank: 5, cells: 3, order: 3, activation: Activation::Identity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    Borehole,
    SobolG,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub generator: GeneratorKind,
    pub n_samples: usize,
    /// Sobol-G only.
    pub noise_sigma: f64,
    pub borehole_ranges: Vec<(f64, f64)>,
    pub sobol_a: Vec<f64>,
    pub target_scaling: TargetScaling,
    /// Input dataset for `fit`.
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorKind::Borehole,
            n_samples: 100_000,
            noise_sigma: 0.01,
            borehole_ranges: BOREHOLE_RANGES.to_vec(),
            sobol_a: sobol_g_default_a(),
            target_scaling: TargetScaling::MinMax,
            path: None,
        }
    }
}

impl DataConfig {
    pub fn generator(&self, seed: u64) -> Generator {
        match self.generator {
            GeneratorKind::Borehole => Generator::Borehole(BoreholeSpec {
                physical_ranges: self.borehole_ranges.clone(),
                n_samples: self.n_samples,
                seed,
            }),
            GeneratorKind::SobolG => Generator::SobolG(SobolGSpec {
                a: self.sobol_a.clone(),
                noise_sigma: self.noise_sigma,
                n_samples: self.n_samples,
                seed,
            }),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvertConfig {
    pub model: Option<PathBuf>,
    /// Target in the model's output units.
    pub target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeProblem {
    /// Rotating plume over the `[advection]` section's space, time and parameters.
    #[default]
    AdvectionDiffusion,
    /// `−Δu = f` with the `[poisson]` section's sine modes.
    Poisson,
    /// Manufactured heat equation with a known rank-one solution.
    Heat,
    /// Viscous-free Burgers with `u₀ = sin(πx)`.
    Burgers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub problem: PdeProblem,
    /// Poisson only; the plume and heat problems are least squares.
    pub formulation: Formulation,
    pub quadrature_per_dim: usize,
    pub mc_samples: usize,
    /// Burgers error grid points per axis.
    pub grid: usize,
}

impl Default for PdeConfig {
    fn default() -> Self {
        Self {
            problem: PdeProblem::AdvectionDiffusion,
            formulation: Formulation::LeastSquares,
            quadrature_per_dim: 24,
            mc_samples: 2000,
            grid: 128,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonConfig {
    pub dims: usize,
    pub modes: Vec<SineMode>,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        Self {
            dims: 3,
            modes: vec![
                SineMode { amplitude: 1.0, wavenumbers: vec![1, 1, 1] },
                SineMode { amplitude: -0.5, wavenumbers: vec![2, 1, 3] },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Borehole,
    SobolG,
    Witness,
    Burgers,
    #[default]
    All,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub suite: Suite,
    /// Overrides the suite's sample count (regression suites only).
    pub n_samples: Option<usize>,
}

/// Parse a snake_case enum name through its serde representation.
pub fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    let norm = s.replace('-', "_");
    serde_json::from_value(serde_json::Value::String(norm)).map_err(|_| format!("unrecognised value `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::from_toml("seed = 4\n[model]\nrank = 2\n[data]\ngenerator = \"sobol_g\"\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.model.rank, 2);
        assert_eq!(cfg.model.cells, 3);
        assert_eq!(cfg.data.generator, GeneratorKind::SobolG);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("[model]\nrnak = 2\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn enum_names_accept_dashes() {
        assert_eq!(parse_enum::<Suite>("sobol-g").unwrap(), Suite::SobolG);
        assert!(parse_enum::<Suite>("nope").is_err());
    }
}
