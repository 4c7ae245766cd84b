//! Reference fields and L² error measurement.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::als::VsnaSolution;
use super::problem::{PlumeSetup, Role, VariationalProblem};
use crate::error::{invalid, Error, Result};
use crate::quadrature::Rule1D;
use crate::rng::substream;

/// Free-space plume: the initial Gaussian rigidly rotated by `ωt` about
/// `(½, ½)` with variance `σ₀² + 2Dt` per axis and mass-preserving amplitude.
/// Wall effects are ignored, so it is a proxy for plumes far from the walls.
pub fn semi_analytic_reference(plume: &PlumeSetup, x: &[f64]) -> f64 {
    let t = x[plume.time_index];
    let omega = plume.omega.value(x);
    let d = plume.diffusivity.value(x);
    let centre = rotated_centre(plume, omega * t);
    let var = plume.sigma0 * plume.sigma0 + 2.0 * d * t;
    let amp = (plume.sigma0 * plume.sigma0 / var).powf(0.5 * plume.n_space as f64);
    let r2: f64 = (0..plume.n_space).map(|k| (x[k] - centre[k]).powi(2)).sum();
    amp * (-r2 / (2.0 * var)).exp()
}

fn rotated_centre(plume: &PlumeSetup, angle: f64) -> Vec<f64> {
    let mut c = plume.centre.clone();
    if plume.n_space >= 2 {
        let (s, co) = angle.sin_cos();
        let (dx, dy) = (c[0] - 0.5, c[1] - 0.5);
        c[0] = 0.5 + co * dx - s * dy;
        c[1] = 0.5 + s * dx + co * dy;
    }
    c
}

/// Composite Gauss–Legendre with about `points` nodes, at most 8 per cell.
pub fn rule_with_points(lo: f64, hi: f64, points: usize) -> Rule1D {
    let cells = points.div_ceil(8).max(1);
    let ppc = points.div_ceil(cells).max(1);
    Rule1D::uniform(lo, hi, cells, ppc)
}

/// Box-averaged L² distance `(|Ω|⁻¹ ∫ (f − g)²)^{1/2}` by a full tensor
/// product rule. Cost grows as `points^d`.
pub fn l2_error(
    field: impl Fn(&[f64]) -> f64,
    reference: impl Fn(&[f64]) -> f64,
    domains: &[(f64, f64)],
    quadrature_per_dim: usize,
) -> Result<f64> {
    if quadrature_per_dim < 2 {
        return Err(invalid("quadrature_per_dim must be >= 2"));
    }
    if domains.is_empty() {
        return Err(invalid("no dimensions"));
    }
    let rules: Vec<Rule1D> = domains.iter().map(|&(a, b)| rule_with_points(a, b, quadrature_per_dim)).collect();
    let vol: f64 = domains.iter().map(|(a, b)| b - a).product();
    let d = rules.len();
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut total = 0.0;
    'outer: loop {
        let mut w = 1.0;
        for i in 0..d {
            x[i] = rules[i].points[idx[i]];
            w *= rules[i].weights[idx[i]];
        }
        let e = field(&x) - reference(&x);
        total += w * e * e;
        for i in (0..d).rev() {
            idx[i] += 1;
            if idx[i] < rules[i].len() {
                continue 'outer;
            }
            idx[i] = 0;
        }
        break;
    }
    Ok((total / vol).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2ErrorReport {
    /// Box-averaged error by tensor-product quadrature.
    pub quadrature: f64,
    /// Same quantity estimated from uniform random samples.
    pub monte_carlo: f64,
    pub monte_carlo_samples: usize,
    /// Box-averaged L² norm of the reference, for relative errors.
    pub reference_norm: f64,
}

/// Error of a plume solution against [`semi_analytic_reference`]. The
/// spatial integrals factorise for both fields, so only the time and
/// parameter coordinates need a tensor grid.
pub fn plume_l2_error(
    problem: &VariationalProblem,
    solution: &VsnaSolution,
    quadrature_per_dim: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<L2ErrorReport> {
    plume_l2_error_at(problem, solution, &[], quadrature_per_dim, mc_samples, seed)
}

/// As [`plume_l2_error`] on the slice where each `(coordinate, value)` in
/// `pins` is held fixed; averages run over the remaining coordinates.
pub fn plume_l2_error_at(
    problem: &VariationalProblem,
    solution: &VsnaSolution,
    pins: &[(usize, f64)],
    quadrature_per_dim: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<L2ErrorReport> {
    let plume = problem
        .plume
        .as_ref()
        .ok_or_else(|| invalid("problem has no plume reference"))?;
    if quadrature_per_dim < 2 {
        return Err(invalid("quadrature_per_dim must be >= 2"));
    }
    let d = problem.dims();
    if solution.model.dims() != d {
        return Err(Error::DimensionMismatch { expected: d, got: solution.model.dims() });
    }
    let n_space = plume.n_space;
    let pin_of = |i: usize| pins.iter().find(|p| p.0 == i).map(|p| p.1);
    for &(i, v) in pins {
        let c = problem.coords.get(i).ok_or_else(|| invalid(format!("pinned coordinate {i} out of range")))?;
        if i < n_space || !(c.domain.0..=c.domain.1).contains(&v) {
            return Err(invalid(format!("cannot pin coordinate {} at {v}", c.name)));
        }
    }
    let rules: Vec<Rule1D> = problem
        .coords
        .iter()
        .enumerate()
        .map(|(i, c)| match pin_of(i) {
            Some(v) => Rule1D { points: vec![v], weights: vec![1.0] },
            None => {
                let q = if c.role == Role::Space { quadrature_per_dim.max(192) } else { quadrature_per_dim };
                rule_with_points(c.domain.0, c.domain.1, q)
            }
        })
        .collect();
    let vol: f64 = problem
        .coords
        .iter()
        .enumerate()
        .filter(|(i, _)| pin_of(*i).is_none())
        .map(|(_, c)| c.domain.1 - c.domain.0)
        .product();

    // Modes of u = u' + u₀ tabulated on every rule: vals[i][j][q].
    let model = &solution.model;
    let r = model.rank();
    let n_modes = r + usize::from(solution.lifting.is_some());
    let mut vals = vec![vec![Vec::new(); n_modes]; d];
    for i in 0..d {
        for j in 0..r {
            vals[i][j] = rules[i]
                .points
                .iter()
                .map(|&x| model.subatom(j, i, x))
                .collect::<Result<Vec<_>>>()?;
        }
        if let Some(l) = &solution.lifting {
            vals[i][r] = rules[i].points.iter().map(|&x| l[i].value(x)).collect();
        }
    }
    let weight = |j: usize| if j < r { model.modal_weights()[j] } else { 1.0 };

    // ‖u‖²: fully separable.
    let mut uu = 0.0;
    for j in 0..n_modes {
        for k in 0..n_modes {
            let mut p = weight(j) * weight(k);
            for i in 0..d {
                p *= rules[i]
                    .weights
                    .iter()
                    .zip(&vals[i][j])
                    .zip(&vals[i][k])
                    .map(|((w, a), b)| w * a * b)
                    .sum::<f64>();
            }
            uu += p;
        }
    }

    // Cross term and ‖ref‖² over the non-spatial grid.
    let outer: Vec<usize> = (n_space..d).collect();
    let mut idx = vec![0usize; outer.len()];
    let mut x = vec![0.0; d];
    let (mut cross, mut rr) = (0.0, 0.0);
    let mut g = vec![Vec::new(); n_space];
    'outer: loop {
        let mut w = 1.0;
        for (o, &i) in outer.iter().enumerate() {
            x[i] = rules[i].points[idx[o]];
            w *= rules[i].weights[idx[o]];
        }
        let t = x[plume.time_index];
        let omega = plume.omega.value(&x);
        let diff = plume.diffusivity.value(&x);
        let centre = rotated_centre(plume, omega * t);
        let var = plume.sigma0 * plume.sigma0 + 2.0 * diff * t;
        let amp = (plume.sigma0 * plume.sigma0 / var).powf(0.5 * n_space as f64);
        let mut gg = amp * amp;
        for k in 0..n_space {
            g[k] = rules[k].points.iter().map(|&s| (-(s - centre[k]).powi(2) / (2.0 * var)).exp()).collect();
            gg *= rules[k].weights.iter().zip(&g[k]).map(|(w, v)| w * v * v).sum::<f64>();
        }
        rr += w * gg;
        let mut c = 0.0;
        for j in 0..n_modes {
            let mut p = weight(j) * amp;
            for k in 0..n_space {
                p *= rules[k]
                    .weights
                    .iter()
                    .zip(&vals[k][j])
                    .zip(&g[k])
                    .map(|((w, a), b)| w * a * b)
                    .sum::<f64>();
            }
            for (o, &i) in outer.iter().enumerate() {
                p *= vals[i][j][idx[o]];
            }
            c += p;
        }
        cross += w * c;
        for o in (0..outer.len()).rev() {
            idx[o] += 1;
            if idx[o] < rules[outer[o]].len() {
                continue 'outer;
            }
            idx[o] = 0;
        }
        break;
    }
    let quad = ((uu - 2.0 * cross + rr).max(0.0) / vol).sqrt();

    let mut rng = substream(seed, "l2-monte-carlo");
    let mut acc = 0.0;
    let mut pt = vec![0.0; d];
    for _ in 0..mc_samples {
        for (i, (p, c)) in pt.iter_mut().zip(&problem.coords).enumerate() {
            *p = pin_of(i).unwrap_or_else(|| c.domain.0 + rng.random::<f64>() * (c.domain.1 - c.domain.0));
        }
        let e = solution.eval(&pt)? - semi_analytic_reference(plume, &pt);
        acc += e * e;
    }
    let mc = if mc_samples > 0 { (acc / mc_samples as f64).sqrt() } else { f64::NAN };
    Ok(L2ErrorReport {
        quadrature: quad,
        monte_carlo: mc,
        monte_carlo_samples: mc_samples,
        reference_norm: (rr / vol).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CpModel;
    use crate::variational::als::{als_solve, AlsConfig};
    use crate::variational::problem::{AdvectionDiffusionConfig, ParamSource};

    fn plume(omega: f64, d: f64) -> PlumeSetup {
        PlumeSetup {
            n_space: 2,
            centre: vec![0.35, 0.5],
            sigma0: 0.08,
            omega: ParamSource::Fixed(omega),
            diffusivity: ParamSource::Fixed(d),
            time_index: 2,
        }
    }

    #[test]
    fn reference_starts_from_the_initial_plume() {
        let p = plume(1.0, 0.01);
        for &(x, y) in &[(0.35, 0.5), (0.3, 0.6), (0.9, 0.1)] {
            let g = (-((x - 0.35f64).powi(2) + (y - 0.5f64).powi(2)) / (2.0 * 0.0064)).exp();
            assert!((semi_analytic_reference(&p, &[x, y, 0.0]) - g).abs() < 1e-15);
        }
    }

    #[test]
    fn frozen_plume_without_transport() {
        let p = plume(0.0, 1e-14);
        for &pt in &[[0.35, 0.5], [0.4, 0.45]] {
            let a = semi_analytic_reference(&p, &[pt[0], pt[1], 0.0]);
            let b = semi_analytic_reference(&p, &[pt[0], pt[1], 1.0]);
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn quarter_turn_moves_the_peak() {
        let p = plume(std::f64::consts::FRAC_PI_2, 0.0);
        // (0.35, 0.5) rotates to (0.5, 0.35).
        assert!((semi_analytic_reference(&p, &[0.5, 0.35, 1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn l2_error_closed_forms() {
        let dom = [(0.0, 1.0), (0.0, 2.0)];
        let zero = l2_error(|x| x[0].sin() * x[1], |x| x[0].sin() * x[1], &dom, 8).unwrap();
        assert!(zero < 1e-15);
        let c = l2_error(|_| 0.3, |_| -0.2, &dom, 4).unwrap();
        assert!((c - 0.5).abs() < 1e-14);
        assert!(l2_error(|_| 0.0, |_| 0.0, &dom, 1).is_err());
    }

    #[test]
    fn rank_one_norm_factorises() {
        let mut m = CpModel::uniform(3, 1, 3, 5).unwrap();
        m.init_uniform(4);
        // 40 points = 5 cells of 8, aligned with the spline breakpoints.
        let full = l2_error(|x| m.eval(x).unwrap(), |_| 0.0, &[(0.0, 1.0); 3], 40).unwrap();
        let rule = rule_with_points(0.0, 1.0, 40);
        let mut prod = m.modal_weights()[0].powi(2);
        for i in 0..3 {
            prod *= rule.integrate(|t| m.subatom(0, i, t).unwrap().powi(2));
        }
        assert!((full - prod.sqrt()).abs() < 1e-12 * full);
    }

    #[test]
    fn semi_separable_error_matches_dense_quadrature() {
        let problem = AdvectionDiffusionConfig::slice_3d(0.6, 0.004).build().unwrap();
        let cfg = AlsConfig { rank: 2, resolution: 6, max_sweeps: 4, ..Default::default() };
        let sol = als_solve(&problem, &cfg).unwrap();
        let plume = problem.plume.clone().unwrap();
        let rep = plume_l2_error(&problem, &sol, 24, 4000, 1).unwrap();
        let dense = l2_error(
            |x| sol.eval(x).unwrap(),
            |x| semi_analytic_reference(&plume, x),
            &[(0.0, 1.0); 3],
            96,
        )
        .unwrap();
        assert!((rep.quadrature - dense).abs() < 1e-6 * dense, "{} vs {dense}", rep.quadrature);
        assert!((rep.monte_carlo - dense).abs() < 0.1 * dense, "MC {} vs {dense}", rep.monte_carlo);
        let slice = plume_l2_error_at(&problem, &sol, &[(2, 0.0)], 24, 0, 1).unwrap();
        let exact0 = l2_error(
            |x| sol.eval(&[x[0], x[1], 0.0]).unwrap(),
            |x| semi_analytic_reference(&plume, &[x[0], x[1], 0.0]),
            &[(0.0, 1.0); 2],
            192,
        )
        .unwrap();
        assert!((slice.quadrature - exact0).abs() < 1e-8, "{} vs {exact0}", slice.quadrature);
    }
}
