//! Recovering inputs that reproduce a target output.
//!
//! Each seed runs a damped least-norm Newton iteration on the scalar residual
//! `g(x) = f(x) − y*`, projected onto a box. Seeds land at different points of
//! the level set, so the converged seeds sample the solution manifold.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::CpModel;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionConfig {
    pub n_seeds: usize,
    pub max_iters: usize,
    /// Tolerance on `|f(x) − y*|` in model output units.
    pub target_tol: f64,
    pub damping: f64,
    /// Largest allowed ∞-norm of a single step.
    pub step_clip: f64,
    /// Per-dimension bounds; the unit box when empty.
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            n_seeds: 64,
            max_iters: 200,
            target_tol: 1e-8,
            damping: 1.0,
            step_clip: 0.25,
            bounds: Vec::new(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedOutcome {
    Converged,
    MaxIters,
    DegenerateGradient,
}

/// One entry per seed, in seed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub target: f64,
    pub solutions: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub converged_flags: Vec<bool>,
    pub outcomes: Vec<SeedOutcome>,
    pub iterations: Vec<usize>,
    pub wall_time_s: f64,
}

impl InversionResult {
    pub fn n_converged(&self) -> usize {
        self.converged_flags.iter().filter(|&&c| c).count()
    }

    pub fn converged(&self) -> impl Iterator<Item = &[f64]> {
        self.solutions
            .iter()
            .zip(&self.converged_flags)
            .filter(|(_, &c)| c)
            .map(|(s, _)| s.as_slice())
    }

    /// Converged solutions with near-duplicates removed: a solution is kept
    /// unless an earlier kept one lies within `threshold` in the ∞-norm.
    pub fn distinct(&self, threshold: f64) -> Vec<Vec<f64>> {
        let mut kept: Vec<Vec<f64>> = Vec::new();
        for s in self.converged() {
            let dup = kept.iter().any(|k| {
                k.iter().zip(s).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) < threshold
            });
            if !dup {
                kept.push(s.to_vec());
            }
        }
        kept
    }
}

pub const DEDUP_THRESHOLD: f64 = 1e-3;
const DEGENERATE_GRAD: f64 = 1e-12;

fn resolve_bounds(model: &CpModel, config: &InversionConfig) -> Result<Vec<(f64, f64)>> {
    let d = model.dims();
    let bounds = if config.bounds.is_empty() {
        vec![(0.0, 1.0); d]
    } else {
        config.bounds.clone()
    };
    if bounds.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: bounds.len() });
    }
    for (&(lo, hi), basis) in bounds.iter().zip(model.bases()) {
        let (a, b) = basis.domain();
        if !(lo <= hi) || lo < a || hi > b {
            return Err(Error::DomainMismatch(lo, hi, a, b));
        }
    }
    Ok(bounds)
}

pub fn invert(model: &CpModel, target: f64, config: &InversionConfig) -> Result<InversionResult> {
    let start = Instant::now();
    if config.n_seeds == 0 {
        return Err(invalid("n_seeds must be >= 1"));
    }
    if !(config.target_tol > 0.0) {
        return Err(invalid("target_tol must be positive"));
    }
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(invalid("damping must lie in (0, 1]"));
    }
    if !(config.step_clip > 0.0) {
        return Err(invalid("step_clip must be positive"));
    }
    if !target.is_finite() {
        return Err(Error::NonFinite("inversion target".into()));
    }
    let bounds = resolve_bounds(model, config)?;
    let mut rng = substream(config.seed, "inversion-seeds");
    let starts: Vec<Vec<f64>> = (0..config.n_seeds)
        .map(|_| bounds.iter().map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo)).collect())
        .collect();
    let runs: Vec<(Vec<f64>, f64, SeedOutcome, usize)> = starts
        .into_par_iter()
        .map(|x0| newton_seed(model, target, config, &bounds, x0))
        .collect::<Result<_>>()?;
    let mut result = InversionResult {
        target,
        solutions: Vec::with_capacity(runs.len()),
        residuals: Vec::with_capacity(runs.len()),
        converged_flags: Vec::with_capacity(runs.len()),
        outcomes: Vec::with_capacity(runs.len()),
        iterations: Vec::with_capacity(runs.len()),
        wall_time_s: 0.0,
    };
    for (x, res, outcome, it) in runs {
        result.solutions.push(x);
        result.residuals.push(res);
        result.converged_flags.push(outcome == SeedOutcome::Converged);
        result.outcomes.push(outcome);
        result.iterations.push(it);
    }
    result.wall_time_s = start.elapsed().as_secs_f64();
    Ok(result)
}

fn newton_seed(
    model: &CpModel,
    target: f64,
    config: &InversionConfig,
    bounds: &[(f64, f64)],
    mut x: Vec<f64>,
) -> Result<(Vec<f64>, f64, SeedOutcome, usize)> {
    for it in 0..=config.max_iters {
        let eg = model.gradient(&x)?;
        let g = eg.value - target;
        if g.abs() <= config.target_tol {
            return Ok((x, g.abs(), SeedOutcome::Converged, it));
        }
        if it == config.max_iters {
            return Ok((x, g.abs(), SeedOutcome::MaxIters, it));
        }
        let norm2: f64 = eg.d_input.iter().map(|v| v * v).sum();
        if norm2.sqrt() < DEGENERATE_GRAD {
            return Ok((x, g.abs(), SeedOutcome::DegenerateGradient, it));
        }
        let scale = -config.damping * g / norm2;
        let mut step: Vec<f64> = eg.d_input.iter().map(|v| scale * v).collect();
        let big = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if big > config.step_clip {
            let s = config.step_clip / big;
            step.iter_mut().for_each(|v| *v *= s);
        }
        for ((xi, si), &(lo, hi)) in x.iter_mut().zip(&step).zip(bounds) {
            *xi = (*xi + si).clamp(lo, hi);
        }
    }
    unreachable!("loop returns on its final iteration")
}

/// Coordinate-wise statistics of the converged solutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub count: usize,
}

pub fn ensemble_envelope(result: &InversionResult) -> Result<Envelope> {
    let mut it = result.converged();
    let first = it.next().ok_or(Error::EmptyEnsemble)?;
    let mut env = Envelope {
        mean: first.to_vec(),
        min: first.to_vec(),
        max: first.to_vec(),
        count: 1,
    };
    for s in it {
        env.count += 1;
        for (k, &v) in s.iter().enumerate() {
            env.mean[k] += v;
            env.min[k] = env.min[k].min(v);
            env.max[k] = env.max[k].max(v);
        }
    }
    let inv = 1.0 / env.count as f64;
    env.mean.iter_mut().for_each(|m| *m *= inv);
    Ok(env)
}
