//! Error-versus-size studies over ranks and resolutions.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::als::{AlsConfig, AlsSolver};
use super::problem::VariationalProblem;
use super::reference::{l2_error, plume_l2_error};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    pub ranks: Vec<usize>,
    pub resolutions: Vec<usize>,
    pub order: usize,
    pub max_sweeps: usize,
    pub rel_residual_tol: f64,
    pub tikhonov_lambda: f64,
    /// Reuse the factors of the previous rank as the starting point.
    pub warm_start: bool,
    pub quadrature_per_dim: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            ranks: vec![1, 2, 4],
            resolutions: vec![4, 8],
            order: 3,
            max_sweeps: 30,
            rel_residual_tol: 1e-8,
            tikhonov_lambda: 1e-8,
            warm_start: true,
            quadrature_per_dim: 24,
            mc_samples: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub rank: usize,
    pub resolution: usize,
    pub parameter_count: usize,
    /// Box-averaged L² error (NaN when the cell failed).
    pub error: f64,
    pub relative_error: f64,
    pub mc_error: f64,
    /// Final value of the minimised functional.
    pub functional: f64,
    pub sweeps: usize,
    pub wall_time_s: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolineFit {
    pub rank: usize,
    /// Resolutions used in the fit.
    pub resolutions: Vec<usize>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
    pub isolines: Vec<IsolineFit>,
    /// Indices into `rows` on the error-versus-N lower envelope.
    pub frontier: Vec<usize>,
    /// `log error ≈ a + slope · log N` along the frontier.
    pub frontier_slope: Option<f64>,
    pub frontier_prefactor: Option<f64>,
}

impl ScalingTable {
    pub fn row(&self, rank: usize, resolution: usize) -> Option<&ScalingRow> {
        self.rows.iter().find(|r| r.rank == rank && r.resolution == resolution)
    }
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Fit along one isoline, stopping before the first doubling that gains
/// less than first order (saturation at the rank or quadrature floor).
pub fn isoline_slope(points: &[(usize, f64)]) -> (Vec<usize>, Option<f64>) {
    let mut pts: Vec<(usize, f64)> = points.iter().copied().filter(|(_, e)| *e > 0.0 && e.is_finite()).collect();
    pts.sort_by_key(|p| p.0);
    let mut keep = pts.len().min(1);
    for w in pts.windows(2) {
        let s = (w[1].1.ln() - w[0].1.ln()) / ((w[1].0 as f64).ln() - (w[0].0 as f64).ln());
        if s > -1.0 {
            break;
        }
        keep += 1;
    }
    let seg = &pts[..keep];
    let xs: Vec<f64> = seg.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = seg.iter().map(|p| p.1.ln()).collect();
    (seg.iter().map(|p| p.0).collect(), linear_fit(&xs, &ys).map(|f| f.0))
}

/// Indices of the points not dominated by any point with fewer or equal parameters.
pub fn pareto_frontier(rows: &[ScalingRow]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].error.is_finite() && rows[i].error > 0.0).collect();
    idx.sort_by(|&a, &b| {
        rows[a]
            .parameter_count
            .cmp(&rows[b].parameter_count)
            .then(rows[a].error.total_cmp(&rows[b].error))
    });
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for i in idx {
        if rows[i].error < best {
            best = rows[i].error;
            out.push(i);
        }
    }
    out
}

/// Errors of a solved field against the plume reference or the exact solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionError {
    /// Box-averaged L² error by tensor quadrature.
    pub l2: f64,
    pub relative: f64,
    /// Monte Carlo estimate of the same quantity (NaN without a plume).
    pub monte_carlo: f64,
}

pub fn solution_error(
    problem: &VariationalProblem,
    sol: &super::als::VsnaSolution,
    quadrature_per_dim: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<SolutionError> {
    if problem.plume.is_some() {
        let r = plume_l2_error(problem, sol, quadrature_per_dim, mc_samples, seed)?;
        return Ok(SolutionError { l2: r.quadrature, relative: r.quadrature / r.reference_norm, monte_carlo: r.monte_carlo });
    }
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| invalid("problem has neither a plume reference nor an exact solution"))?;
    let domains: Vec<(f64, f64)> = problem.coords.iter().map(|c| c.domain).collect();
    let err = l2_error(|x| sol.eval(x).unwrap_or(f64::NAN), |x| exact.eval(x), &domains, quadrature_per_dim)?;
    let norm = l2_error(|x| exact.eval(x), |_| 0.0, &domains, quadrature_per_dim)?;
    Ok(SolutionError { l2: err, relative: err / norm, monte_carlo: f64::NAN })
}

/// Solve on every `(R, C)` cell. Failures are recorded per cell.
pub fn scaling_study(problem: &VariationalProblem, cfg: &ScalingConfig) -> Result<ScalingTable> {
    if cfg.ranks.is_empty() || cfg.resolutions.is_empty() {
        return Err(invalid("ranks and resolutions must be non-empty"));
    }
    let mut ranks = cfg.ranks.clone();
    ranks.sort_unstable();
    ranks.dedup();
    let mut rows = Vec::new();
    for &c in &cfg.resolutions {
        let solver = match AlsSolver::new(problem, c, cfg.order) {
            Ok(s) => Some(s),
            Err(e) => {
                for &r in &ranks {
                    rows.push(failed_row(r, c, 0, e.to_string()));
                }
                None
            }
        };
        let Some(solver) = solver else { continue };
        let mut prev = None;
        for &r in &ranks {
            let als = AlsConfig {
                rank: r,
                resolution: c,
                order: cfg.order,
                tikhonov_lambda: cfg.tikhonov_lambda,
                max_sweeps: cfg.max_sweeps,
                rel_residual_tol: cfg.rel_residual_tol,
                seed: cfg.seed,
                ..Default::default()
            };
            let start = Instant::now();
            let init = match (&prev, cfg.warm_start) {
                (Some(p), true) => solver.extend_factors(p, r, cfg.seed.wrapping_add(r as u64)),
                _ => solver.random_factors(r, cfg.seed),
            };
            let n = solver.parameter_count(r);
            let outcome = solver.run(init, &als).and_then(|(f, h, u, s)| {
                let sol = solver.solution(&f, h, u, s, start.elapsed().as_secs_f64())?;
                let m = solution_error(problem, &sol, cfg.quadrature_per_dim, cfg.mc_samples, cfg.seed)?;
                Ok((f, s, sol.residual_history.last().copied().unwrap_or(f64::NAN), m))
            });
            match outcome {
                Ok((f, sweeps, functional, m)) => {
                    rows.push(ScalingRow {
                        rank: r,
                        resolution: c,
                        parameter_count: n,
                        error: m.l2,
                        relative_error: m.relative,
                        mc_error: m.monte_carlo,
                        functional,
                        sweeps,
                        wall_time_s: start.elapsed().as_secs_f64(),
                        failure: None,
                    });
                    prev = Some(f);
                }
                Err(e) => rows.push(failed_row(r, c, n, e.to_string())),
            }
        }
    }
    let isolines = ranks
        .iter()
        .map(|&r| {
            let pts: Vec<(usize, f64)> = rows.iter().filter(|x| x.rank == r).map(|x| (x.resolution, x.error)).collect();
            let (resolutions, slope) = isoline_slope(&pts);
            IsolineFit { rank: r, resolutions, slope }
        })
        .collect();
    let frontier = pareto_frontier(&rows);
    let xs: Vec<f64> = frontier.iter().map(|&i| (rows[i].parameter_count as f64).ln()).collect();
    let ys: Vec<f64> = frontier.iter().map(|&i| rows[i].error.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(ScalingTable {
        rows,
        isolines,
        frontier,
        frontier_slope: fit.map(|f| f.0),
        frontier_prefactor: fit.map(|f| f.1.exp()),
    })
}

fn failed_row(rank: usize, resolution: usize, n: usize, msg: String) -> ScalingRow {
    ScalingRow {
        rank,
        resolution,
        parameter_count: n,
        error: f64::NAN,
        relative_error: f64::NAN,
        mc_error: f64::NAN,
        functional: f64::NAN,
        sweeps: 0,
        wall_time_s: 0.0,
        failure: Some(msg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_fit_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (s, a) = linear_fit(&x, &y).unwrap();
        assert!((s + 0.5).abs() < 1e-14 && (a - 2.0).abs() < 1e-14);
    }

    #[test]
    fn isoline_stops_at_saturation() {
        let pts = [(4, 1e-2), (8, 1e-2 / 16.0), (16, 1e-2 / 256.0), (32, 1e-2 / 300.0)];
        let (used, slope) = isoline_slope(&pts);
        assert_eq!(used, vec![4, 8, 16]);
        assert!((slope.unwrap() + 4.0).abs() < 1e-12);
    }

    fn row(n: usize, e: f64) -> ScalingRow {
        ScalingRow {
            rank: 1,
            resolution: 1,
            parameter_count: n,
            error: e,
            relative_error: e,
            mc_error: e,
            functional: e,
            sweeps: 1,
            wall_time_s: 0.0,
            failure: None,
        }
    }

    #[test]
    fn frontier_drops_dominated_points() {
        let rows = vec![row(10, 1.0), row(20, 2.0), row(30, 0.5), row(30, 0.4), row(40, f64::NAN)];
        assert_eq!(pareto_frontier(&rows), vec![0, 3]);
    }
}
