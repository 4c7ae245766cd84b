//! Problem descriptions for the space–time–parameter solvers.

use serde::{Deserialize, Serialize};

use super::profile::{OpFactor, Poly, Profile1D, SeparableFunction, SeparableOperator};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    AdvectionDiffusion,
    Burgers1d,
    PoissonNd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Space,
    Time,
    Parameter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coordinate {
    pub name: String,
    pub role: Role,
    pub domain: (f64, f64),
    /// Homogeneous conditions at the (lower, upper) end.
    pub pinned: (bool, bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Minimise `½‖Lu − f‖²` over the box.
    LeastSquares,
    /// Minimise `½a(u,u) − ℓ(u)` for a symmetric coercive `a`.
    Energy,
}

/// Where a physical coefficient comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSource {
    Fixed(f64),
    Coordinate(usize),
}

impl ParamSource {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            ParamSource::Fixed(v) => v,
            ParamSource::Coordinate(i) => x[i],
        }
    }
}

/// Rotating-wind transport of a Gaussian plume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlumeSetup {
    pub n_space: usize,
    pub centre: Vec<f64>,
    pub sigma0: f64,
    pub omega: ParamSource,
    pub diffusivity: ParamSource,
    pub time_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalProblem {
    pub kind: ProblemKind,
    pub coords: Vec<Coordinate>,
    pub formulation: Formulation,
    /// Used by the least-squares formulation.
    pub operator: SeparableOperator,
    pub source: SeparableFunction,
    /// Rank-one offset `u₀` with `u = u' + u₀`; satisfies the data the
    /// pinned sub-atoms of `u'` cannot.
    pub lifting: Option<Vec<Profile1D>>,
    pub plume: Option<PlumeSetup>,
    /// Closed-form solution when one is known.
    pub exact: Option<SeparableFunction>,
}

impl VariationalProblem {
    pub fn dims(&self) -> usize {
        self.coords.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        if d == 0 {
            return Err(invalid("problem has no coordinates"));
        }
        for c in &self.coords {
            if !(c.domain.0 < c.domain.1) {
                return Err(invalid(format!("coordinate {} has an empty domain", c.name)));
            }
        }
        if self.operator.dims != d && self.formulation == Formulation::LeastSquares {
            return Err(Error::DimensionMismatch { expected: d, got: self.operator.dims });
        }
        for t in &self.source.terms {
            if t.factors.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: t.factors.len() });
            }
        }
        if let Some(l) = &self.lifting {
            if l.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: l.len() });
            }
        }
        let n_space = self.coords.iter().filter(|c| c.role == Role::Space).count();
        let n_time = self.coords.iter().filter(|c| c.role == Role::Time).count();
        let n_param = self.coords.iter().filter(|c| c.role == Role::Parameter).count();
        if n_space + n_time + n_param != d || n_time > 1 {
            return Err(invalid("coordinates must be space…, at most one time, parameters…"));
        }
        Ok(())
    }

    /// Lifting offset at a point (zero without lifting).
    pub fn lifting_value(&self, x: &[f64]) -> f64 {
        self.lifting
            .as_ref()
            .map_or(0.0, |l| l.iter().zip(x).map(|(p, &xi)| p.value(xi)).product())
    }

    /// Source seen by `u'`: `f − L u₀`.
    pub fn effective_source(&self) -> SeparableFunction {
        let mut f = self.source.clone();
        if let (Some(l), Formulation::LeastSquares) = (&self.lifting, self.formulation) {
            let u0 = SeparableFunction::rank_one(l.clone());
            f.extend(self.operator.apply(&u0).scaled(-1.0));
        }
        f
    }
}

fn unit(name: &str, role: Role, pinned: (bool, bool)) -> Coordinate {
    Coordinate {
        name: name.into(),
        role,
        domain: (0.0, 1.0),
        pinned,
    }
}

/// Configuration of the rotating-plume problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdvectionDiffusionConfig {
    /// 2 or 3 spatial dimensions.
    pub n_space: usize,
    pub centre: Vec<f64>,
    pub sigma0: f64,
    pub t_end: f64,
    /// `[lo, hi]` spans the angular velocity as a coordinate; a single value fixes it.
    pub omega: Vec<f64>,
    pub diffusivity: Vec<f64>,
}

impl Default for AdvectionDiffusionConfig {
    fn default() -> Self {
        Self {
            n_space: 3,
            centre: vec![0.35, 0.5, 0.5],
            sigma0: 0.08,
            t_end: 1.0,
            omega: vec![0.0, std::f64::consts::FRAC_PI_3],
            diffusivity: vec![0.001, 0.01],
        }
    }
}

impl AdvectionDiffusionConfig {
    /// The three-coordinate slice `(x, y, t)` at fixed ω and D.
    pub fn slice_3d(omega: f64, diffusivity: f64) -> Self {
        Self {
            n_space: 2,
            centre: vec![0.35, 0.5],
            omega: vec![omega],
            diffusivity: vec![diffusivity],
            ..Default::default()
        }
    }

    pub fn build(&self) -> Result<VariationalProblem> {
        advection_diffusion(self)
    }
}

fn param_coord(values: &[f64], name: &str, coords: &mut Vec<Coordinate>) -> Result<ParamSource> {
    match values {
        [v] => Ok(ParamSource::Fixed(*v)),
        [lo, hi] if lo < hi => {
            coords.push(Coordinate {
                name: name.into(),
                role: Role::Parameter,
                domain: (*lo, *hi),
                pinned: (false, false),
            });
            Ok(ParamSource::Coordinate(coords.len() - 1))
        }
        _ => Err(invalid(format!("{name} needs one value or an increasing [lo, hi] pair"))),
    }
}

/// `∂_t u + U·∇u − DΔu = 0` with `U = ω(−(y−½), x−½, 0)`, homogeneous
/// Dirichlet walls and a Gaussian initial plume.
pub fn advection_diffusion(cfg: &AdvectionDiffusionConfig) -> Result<VariationalProblem> {
    let n = cfg.n_space;
    if !(1..=3).contains(&n) || cfg.centre.len() != n {
        return Err(invalid("n_space must be 1..=3 with a matching centre"));
    }
    if !(cfg.sigma0 > 0.0) || !(cfg.t_end > 0.0) {
        return Err(invalid("sigma0 and t_end must be positive"));
    }
    let names = ["x", "y", "z"];
    let mut coords: Vec<Coordinate> = (0..n).map(|i| unit(names[i], Role::Space, (true, true))).collect();
    coords.push(Coordinate {
        name: "t".into(),
        role: Role::Time,
        domain: (0.0, cfg.t_end),
        pinned: (true, false),
    });
    let t_idx = n;
    let omega = param_coord(&cfg.omega, "omega", &mut coords)?;
    let diff = param_coord(&cfg.diffusivity, "D", &mut coords)?;
    if let ParamSource::Fixed(d) = diff {
        if d < 0.0 {
            return Err(invalid("diffusivity must be non-negative"));
        }
    }
    let d = coords.len();
    let mut op = SeparableOperator::new(d);
    op.push(1.0, &[(t_idx, OpFactor::derivative(1))])?;
    if n >= 2 && omega != ParamSource::Fixed(0.0) {
        // −ω(y−½)∂_x + ω(x−½)∂_y
        for (sign, moved, weighted) in [(-1.0, 0usize, 1usize), (1.0, 1, 0)] {
            let mut factors = vec![
                (moved, OpFactor::derivative(1)),
                (weighted, OpFactor::weighted(Poly::linear(-0.5, 1.0))),
            ];
            let coef = match omega {
                ParamSource::Fixed(w) => sign * w,
                ParamSource::Coordinate(i) => {
                    factors.push((i, OpFactor::weighted(Poly::linear(0.0, 1.0))));
                    sign
                }
            };
            op.push(coef, &factors)?;
        }
    }
    for k in 0..n {
        let mut factors = vec![(k, OpFactor::derivative(2))];
        let coef = match diff {
            ParamSource::Fixed(v) => -v,
            ParamSource::Coordinate(i) => {
                factors.push((i, OpFactor::weighted(Poly::linear(0.0, 1.0))));
                -1.0
            }
        };
        if coef != 0.0 {
            op.push(coef, &factors)?;
        }
    }
    let lifting: Vec<Profile1D> = (0..d)
        .map(|i| {
            if i < n {
                Profile1D::Gaussian {
                    centre: cfg.centre[i],
                    sigma: cfg.sigma0,
                    wall_correction: Some((0.0, 1.0)),
                }
            } else {
                Profile1D::Constant { value: 1.0 }
            }
        })
        .collect();
    let p = VariationalProblem {
        kind: ProblemKind::AdvectionDiffusion,
        coords,
        formulation: Formulation::LeastSquares,
        operator: op,
        source: SeparableFunction::default(),
        lifting: Some(lifting),
        plume: Some(PlumeSetup {
            n_space: n,
            centre: cfg.centre.clone(),
            sigma0: cfg.sigma0,
            omega,
            diffusivity: diff,
            time_index: t_idx,
        }),
        exact: None,
    };
    p.validate()?;
    Ok(p)
}

/// `u_t − u_xx = f` on `[0,1]²` with exact solution `sin(πx)e^{−t}`.
pub fn heat_manufactured() -> VariationalProblem {
    let mut op = SeparableOperator::new(2);
    op.push(1.0, &[(1, OpFactor::derivative(1))]).expect("valid dims");
    op.push(-1.0, &[(0, OpFactor::derivative(2))]).expect("valid dims");
    let sine = Profile1D::Sine { frequency: 1.0 };
    let decay = Profile1D::Exp { rate: -1.0 };
    let exact = SeparableFunction::rank_one(vec![sine.clone(), decay.clone()]);
    let source = op.apply(&exact);
    VariationalProblem {
        kind: ProblemKind::AdvectionDiffusion,
        coords: vec![unit("x", Role::Space, (true, true)), unit("t", Role::Time, (true, false))],
        formulation: Formulation::LeastSquares,
        operator: op,
        source,
        lifting: Some(vec![sine, Profile1D::Constant { value: 1.0 }]),
        plume: None,
        exact: Some(exact),
    }
}

/// One sine-product source mode `a · Π sin(k_i π x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineMode {
    pub amplitude: f64,
    pub wavenumbers: Vec<u32>,
}

/// `−Δu = f` on `[0,1]ⁿ` with homogeneous Dirichlet walls.
pub fn poisson_nd(n: usize, modes: &[SineMode], formulation: Formulation) -> Result<VariationalProblem> {
    if n == 0 {
        return Err(invalid("poisson_nd needs n >= 1"));
    }
    let mut source = SeparableFunction::default();
    let mut exact = SeparableFunction::default();
    let pi2 = std::f64::consts::PI.powi(2);
    for m in modes {
        if m.wavenumbers.len() != n || m.wavenumbers.contains(&0) {
            return Err(invalid("each mode needs n positive wavenumbers"));
        }
        let profiles: Vec<Profile1D> = m
            .wavenumbers
            .iter()
            .map(|&k| Profile1D::Sine { frequency: k as f64 })
            .collect();
        let k2: f64 = m.wavenumbers.iter().map(|&k| (k * k) as f64).sum();
        source.extend(SeparableFunction::rank_one(profiles.clone()).scaled(m.amplitude));
        exact.extend(SeparableFunction::rank_one(profiles).scaled(m.amplitude / (pi2 * k2)));
    }
    let mut op = SeparableOperator::new(n);
    for k in 0..n {
        op.push(-1.0, &[(k, OpFactor::derivative(2))])?;
    }
    let names = ["x", "y", "z", "w"];
    let coords = (0..n)
        .map(|i| {
            let name = names.get(i).map_or_else(|| format!("x{i}"), |s| s.to_string());
            Coordinate {
                name,
                role: Role::Space,
                domain: (0.0, 1.0),
                pinned: (true, true),
            }
        })
        .collect();
    Ok(VariationalProblem {
        kind: ProblemKind::PoissonNd,
        coords,
        formulation,
        operator: op,
        source,
        lifting: None,
        plume: None,
        exact: Some(exact),
    })
}

/// Coercivity constant of `∫∇u·∇v` on `H¹₀([0,1]ⁿ)` with the full `H¹` norm.
pub fn poisson_coercivity(n: usize) -> f64 {
    let p = n as f64 * std::f64::consts::PI.powi(2);
    p / (p + 1.0)
}

/// Dual norm of `v ↦ ∫fv` on `H¹₀` for a sine-product source with
/// distinct wavenumber vectors.
pub fn poisson_source_dual_norm(n: usize, modes: &[SineMode]) -> f64 {
    let pi2 = std::f64::consts::PI.powi(2);
    let vol = 0.5f64.powi(n as i32);
    modes
        .iter()
        .map(|m| {
            let k2: f64 = m.wavenumbers.iter().map(|&k| (k * k) as f64).sum();
            m.amplitude * m.amplitude * vol / (1.0 + pi2 * k2)
        })
        .sum::<f64>()
        .sqrt()
}
