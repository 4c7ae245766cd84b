//! Alternating least squares on separable quadratic functionals.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::form::{Contractions, Factors, QuadraticForm};
use super::problem::{Formulation, ProblemKind, VariationalProblem};
use super::profile::Profile1D;
use crate::error::{invalid, Error, Result};
use crate::model::{Activation, CpModel};
use crate::rng::substream;
use crate::splines::{integral_matrix, IntegralMatrixSpec, SplineBasis1D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlsConfig {
    pub rank: usize,
    /// Interior cells per dimension.
    pub resolution: usize,
    pub order: usize,
    /// Relative Tikhonov weight: `λ = tikhonov_lambda · tr(A)/n` per block.
    pub tikhonov_lambda: f64,
    /// Regularise towards the current block instead of towards zero. Keeps
    /// every update an exact descent step for the unregularised functional.
    pub proximal: bool,
    pub max_sweeps: usize,
    pub rel_residual_tol: f64,
    pub seed: u64,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            rank: 4,
            resolution: 8,
            order: 3,
            tikhonov_lambda: 1e-8,
            proximal: true,
            max_sweeps: 100,
            rel_residual_tol: 1e-10,
            seed: 0,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.resolution == 0 || self.order == 0 {
            return Err(invalid("rank, resolution and order must be >= 1"));
        }
        if !(self.tikhonov_lambda > 0.0) {
            return Err(invalid("tikhonov_lambda must be positive"));
        }
        if self.max_sweeps == 0 {
            return Err(invalid("max_sweeps must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct VsnaSolution {
    /// The correction `u'`; the full field is `u' + u₀`.
    pub model: CpModel,
    pub lifting: Option<Vec<Profile1D>>,
    /// Functional value before the first sweep and after each sweep.
    pub residual_history: Vec<f64>,
    /// Functional value after every single block update.
    pub update_history: Vec<f64>,
    pub sweeps_run: usize,
    pub formulation: Formulation,
    pub wall_time_s: f64,
}

impl VsnaSolution {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let lift = self
            .lifting
            .as_ref()
            .map_or(0.0, |l| l.iter().zip(x).map(|(p, &xi)| p.value(xi)).product());
        Ok(self.model.eval(x)? + lift)
    }

    /// `‖Lu − f‖` over the box for least-squares problems.
    pub fn final_residual(&self) -> f64 {
        let j = self.residual_history.last().copied().unwrap_or(f64::NAN);
        match self.formulation {
            Formulation::LeastSquares => (2.0 * j.max(0.0)).sqrt(),
            Formulation::Energy => j,
        }
    }
}

/// Orthonormal basis of `{θ : Bθ = 0}` for the rows `B` of pinned values.
fn null_space(rows: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    if rows.is_empty() {
        return DMatrix::identity(n, n);
    }
    let b = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    let bbt = &b * b.transpose();
    let inv = bbt.try_inverse().expect("pinned rows are independent");
    let proj = DMatrix::identity(n, n) - b.transpose() * inv * &b;
    let eig = SymmetricEigen::new(proj);
    let mut cols: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .filter(|(v, _)| **v > 0.5)
        .map(|(v, c)| (*v, c.into_owned()))
        .collect();
    cols.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut t = DMatrix::zeros(n, cols.len());
    for (k, (_, c)) in cols.iter().enumerate() {
        // Fix the sign so the largest entry is positive.
        let imax = c.iamax();
        let s = if c[imax] < 0.0 { -1.0 } else { 1.0 };
        t.set_column(k, &(c * s));
    }
    t
}

/// Precomputed data for one problem at one resolution; reusable across ranks.
#[derive(Debug, Clone)]
pub struct AlsSolver {
    pub bases: Vec<SplineBasis1D>,
    pub transforms: Vec<DMatrix<f64>>,
    pub form: QuadraticForm,
    mass: Vec<DMatrix<f64>>,
    formulation: Formulation,
    lifting: Option<Vec<Profile1D>>,
}

impl AlsSolver {
    pub fn new(problem: &VariationalProblem, resolution: usize, order: usize) -> Result<Self> {
        problem.validate()?;
        if problem.kind == ProblemKind::Burgers1d {
            return Err(invalid("ALS handles linear problems only"));
        }
        let bases: Vec<SplineBasis1D> = problem
            .coords
            .iter()
            .map(|c| SplineBasis1D::new(order, resolution, c.domain))
            .collect::<Result<_>>()?;
        let full = match problem.formulation {
            Formulation::LeastSquares => {
                QuadraticForm::least_squares(&bases, &problem.operator.terms, &problem.effective_source())?
            }
            Formulation::Energy => QuadraticForm::dirichlet_energy(&bases, &problem.source)?,
        };
        let mut transforms = Vec::with_capacity(bases.len());
        for (b, c) in bases.iter().zip(&problem.coords) {
            let mut rows = Vec::new();
            if c.pinned.0 {
                rows.push(b.eval_dense(c.domain.0, 0)?);
            }
            if c.pinned.1 {
                rows.push(b.eval_dense(c.domain.1, 0)?);
            }
            let t = null_space(&rows, b.n_funcs());
            if t.ncols() == 0 {
                return Err(invalid("resolution too coarse for the pinned conditions"));
            }
            transforms.push(t);
        }
        let form = full.restrict(&transforms);
        let mass = bases
            .iter()
            .zip(&transforms)
            .map(|(b, t)| {
                let m = integral_matrix(b, b, IntegralMatrixSpec::mass(b.order()))?;
                let n = b.n_funcs();
                let m = DMatrix::from_fn(n, n, |r, c| m[r][c]);
                Ok(t.transpose() * m * t)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            bases,
            transforms,
            form,
            mass,
            formulation: problem.formulation,
            lifting: problem.lifting.clone(),
        })
    }

    pub fn dims(&self) -> usize {
        self.bases.len()
    }

    /// Trainable parameter count `R · Σ(C + P)`.
    pub fn parameter_count(&self, rank: usize) -> usize {
        rank * self.bases.iter().map(|b| b.n_funcs()).sum::<usize>()
    }

    /// Seeded random factors in reduced coordinates.
    pub fn random_factors(&self, rank: usize, seed: u64) -> Factors {
        let mut rng = substream(seed, "als-init");
        Factors {
            blocks: self
                .transforms
                .iter()
                .map(|t| DMatrix::from_fn(t.ncols(), rank, |_, _| rng.random_range(-1.0..1.0)))
                .collect(),
        }
    }

    /// Enlarge `prev` to `rank` modes. New modes start with a zero block in
    /// dimension 0, so the represented field is unchanged.
    pub fn extend_factors(&self, prev: &Factors, rank: usize, seed: u64) -> Factors {
        let fresh = self.random_factors(rank, seed);
        let r0 = prev.rank().min(rank);
        let mut out = fresh;
        for (i, (blk, old)) in out.blocks.iter_mut().zip(&prev.blocks).enumerate() {
            for j in 0..rank {
                if j < r0 {
                    blk.set_column(j, &old.column(j));
                } else if i == 0 {
                    blk.column_mut(j).fill(0.0);
                }
            }
        }
        out
    }

    /// Scale each updated sub-atom to unit L² norm and spread the norm
    /// evenly over the other dimensions. Returns the per-mode factor applied
    /// to the active block and to every other block.
    fn renormalise(&self, f: &mut Factors, active: usize) -> (Vec<f64>, Vec<f64>) {
        let d = f.dims();
        let r = f.rank();
        let (mut own, mut share) = (vec![1.0; r], vec![1.0; r]);
        if d < 2 {
            return (own, share);
        }
        for j in 0..r {
            let col = f.blocks[active].column(j).into_owned();
            let norm = (col.transpose() * &self.mass[active] * &col)[(0, 0)].max(0.0).sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                continue;
            }
            own[j] = 1.0 / norm;
            share[j] = norm.powf(1.0 / (d - 1) as f64);
            f.blocks[active].column_mut(j).scale_mut(own[j]);
            for i in (0..d).filter(|&i| i != active) {
                f.blocks[i].column_mut(j).scale_mut(share[j]);
            }
        }
        (own, share)
    }

    /// Solve one block exactly. Returns the regularisation weight used.
    pub fn update_block(&self, f: &mut Factors, active: usize, config: &AlsConfig) -> Result<f64> {
        let mut c = self.form.contract(f);
        self.update_block_cached(f, &mut c, active, config)
    }

    fn update_block_cached(
        &self,
        f: &mut Factors,
        c: &mut Contractions,
        active: usize,
        config: &AlsConfig,
    ) -> Result<f64> {
        let (mut a, mut b) = self.form.local_system_from(c, f.rank(), active, 0.0);
        let m = a.nrows();
        let lambda = config.tikhonov_lambda * (a.trace() / m as f64).abs().max(f64::MIN_POSITIVE);
        for k in 0..m {
            a[(k, k)] += lambda;
        }
        if config.proximal {
            let old = DVector::from_column_slice(f.blocks[active].as_slice());
            b.axpy(lambda, &old, 1.0);
        }
        let sol = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a
                .lu()
                .solve(&b)
                .ok_or_else(|| Error::Singular("ALS local system".into()))?,
        };
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ALS block solution".into()));
        }
        let n = self.form.sizes[active];
        f.blocks[active] = DMatrix::from_column_slice(n, f.rank(), sol.as_slice());
        let (_, share) = self.renormalise(f, active);
        self.form.refresh(c, f, active);
        for i in (0..f.dims()).filter(|&i| i != active) {
            c.scale_columns(i, &share);
        }
        Ok(lambda)
    }

    /// Run sweeps from `init` until the relative change of the functional
    /// drops below tolerance.
    pub fn run(&self, init: Factors, config: &AlsConfig) -> Result<(Factors, Vec<f64>, Vec<f64>, usize)> {
        config.validate()?;
        let mut f = init;
        let mut c = self.form.contract(&f);
        let mut history = vec![self.form.energy_from(&c)];
        let mut updates = Vec::new();
        let mut sweeps = 0;
        for _ in 0..config.max_sweeps {
            for a in 0..self.dims() {
                self.update_block_cached(&mut f, &mut c, a, config)?;
                let j = self.form.energy_from(&c);
                if !j.is_finite() {
                    return Err(Error::NonFinite("ALS functional".into()));
                }
                updates.push(j);
            }
            sweeps += 1;
            let prev = *history.last().expect("history is non-empty");
            let cur = *updates.last().expect("at least one update");
            history.push(cur);
            let scale = prev.abs().max(cur.abs()).max(f64::MIN_POSITIVE);
            if (prev - cur).abs() <= config.rel_residual_tol * scale {
                break;
            }
        }
        Ok((f, history, updates, sweeps))
    }

    /// Full-coordinate CP model of the correction `u'`.
    pub fn to_model(&self, f: &Factors) -> Result<CpModel> {
        let r = f.rank();
        let mut model = CpModel::new(self.bases.clone(), r, Activation::Identity)?;
        for (i, (t, blk)) in self.transforms.iter().zip(&f.blocks).enumerate() {
            let full = t * blk;
            for j in 0..r {
                model.block_mut(j, i).copy_from_slice(full.column(j).as_slice());
            }
        }
        Ok(model)
    }

    /// Reduced factors of a CP model built on the same bases.
    pub fn factors_of(&self, model: &CpModel) -> Factors {
        Factors {
            blocks: self
                .transforms
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    DMatrix::from_fn(t.ncols(), model.rank(), |p, j| {
                        t.column(p).dot(&DVector::from_column_slice(model.block(j, i)))
                    })
                })
                .collect(),
        }
    }

    pub fn solution(&self, f: &Factors, history: Vec<f64>, updates: Vec<f64>, sweeps: usize, wall: f64) -> Result<VsnaSolution> {
        Ok(VsnaSolution {
            model: self.to_model(f)?,
            lifting: self.lifting.clone(),
            residual_history: history,
            update_history: updates,
            sweeps_run: sweeps,
            formulation: self.formulation,
            wall_time_s: wall,
        })
    }
}

/// Assemble `(A + λI, b)` for the block of `active` in the full
/// (unconstrained) coefficient space of `current`.
pub fn assemble_local_system(
    problem: &VariationalProblem,
    current: &CpModel,
    active: usize,
    lambda: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    problem.validate()?;
    if current.dims() != problem.dims() {
        return Err(Error::DimensionMismatch { expected: problem.dims(), got: current.dims() });
    }
    if active >= current.dims() {
        return Err(invalid("active dimension out of range"));
    }
    let bases = current.bases();
    let form = match problem.formulation {
        Formulation::LeastSquares => {
            QuadraticForm::least_squares(bases, &problem.operator.terms, &problem.effective_source())?
        }
        Formulation::Energy => QuadraticForm::dirichlet_energy(bases, &problem.source)?,
    };
    let f = Factors {
        blocks: (0..current.dims())
            .map(|i| {
                let n = bases[i].n_funcs();
                DMatrix::from_fn(n, current.rank(), |p, j| current.block(j, i)[p])
            })
            .collect(),
    };
    Ok(form.local_system(&f, active, lambda))
}

pub fn als_solve(problem: &VariationalProblem, config: &AlsConfig) -> Result<VsnaSolution> {
    config.validate()?;
    let start = Instant::now();
    let solver = AlsSolver::new(problem, config.resolution, config.order)?;
    let init = solver.random_factors(config.rank, config.seed);
    let (f, h, u, s) = solver.run(init, config)?;
    solver.solution(&f, h, u, s, start.elapsed().as_secs_f64())
}
