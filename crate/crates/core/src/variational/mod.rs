//! Tensor-native variational solvers: the PDE solution is itself a CP model
//! whose factors are found by alternating least squares on a separable
//! quadratic functional.

pub mod als;
pub mod burgers;
pub mod form;
pub mod problem;
pub mod profile;
pub mod reference;
pub mod scaling;

pub use als::{als_solve, AlsConfig, AlsSolver, VsnaSolution};
pub use form::{Factors, QuadraticForm};
pub use problem::{
    advection_diffusion, heat_manufactured, poisson_nd, AdvectionDiffusionConfig, Formulation, ProblemKind,
    VariationalProblem,
};
pub use profile::{Poly, Profile1D, SeparableFunction, SeparableOperator};
pub use reference::{l2_error, plume_l2_error, plume_l2_error_at, semi_analytic_reference, L2ErrorReport};
pub use scaling::{scaling_study, solution_error, IsolineFit, ScalingConfig, ScalingRow, ScalingTable, SolutionError};
pub use burgers::{burgers_characteristics_oracle, burgers_max_error, burgers_weak_solve, BurgersConfig, BurgersSolution, SpectralTrial};
