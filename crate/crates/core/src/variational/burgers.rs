//! Inviscid Burgers `u_t + u u_x = 0` on `[0,1] × [0,T]` by weak-residual
//! minimisation over a sine × Chebyshev trial space.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::profile::Profile1D;
use super::reference::rule_with_points;
use crate::error::{invalid, Error, Result};
use crate::optim::{lbfgs, LbfgsConfig, LbfgsStop};
use crate::quadrature::Rule1D;

/// `û(x,t) = u₀(x) + Σ_kl c_kl sin(kπx) χ_l(t)` where the `χ_l` are
/// Chebyshev polynomials on `[0,T]` shifted to vanish at `t = 0` and then
/// orthonormalised, so `û(·,0) = u₀` and `û(0,t), û(1,t)` match `u₀` for
/// every coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTrial {
    pub u0: Profile1D,
    pub t_end: f64,
    /// `n_x × n_t`.
    pub coeffs: DMatrix<f64>,
    /// `χ_j = Σ_l raw_l · transform[(l, j)]` with `raw_l = T_l(s) − T_l(−1)`.
    transform: DMatrix<f64>,
}

/// Chebyshev `T_l(s)` and `T_l'(s)` for `l = 0..=n`.
fn chebyshev(n: usize, s: f64) -> (Vec<f64>, Vec<f64>) {
    let mut t = vec![0.0; n + 1];
    let mut u = vec![0.0; n + 1];
    t[0] = 1.0;
    u[0] = 1.0;
    if n >= 1 {
        t[1] = s;
        u[1] = 2.0 * s;
    }
    for l in 2..=n {
        t[l] = 2.0 * s * t[l - 1] - t[l - 2];
        u[l] = 2.0 * s * u[l - 1] - u[l - 2];
    }
    let mut dt = vec![0.0; n + 1];
    for l in 1..=n {
        dt[l] = l as f64 * u[l - 1];
    }
    (t, dt)
}

impl SpectralTrial {
    pub fn new(u0: Profile1D, n_x: usize, n_t: usize, t_end: f64) -> Result<Self> {
        if n_x == 0 || n_t == 0 {
            return Err(invalid("trial needs n_x, n_t >= 1"));
        }
        if !(t_end > 0.0) {
            return Err(invalid("t_end must be positive"));
        }
        let mut trial = Self {
            u0,
            t_end,
            coeffs: DMatrix::zeros(n_x, n_t),
            transform: DMatrix::identity(n_t, n_t),
        };
        let rule = Rule1D::uniform(0.0, t_end, 1, n_t + 2);
        let mut gram = DMatrix::zeros(n_t, n_t);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let (raw, _) = trial.raw_time(t);
            gram += w * &raw * raw.transpose();
        }
        let l = gram
            .cholesky()
            .ok_or_else(|| Error::Singular("Chebyshev Gram matrix".into()))?
            .l();
        trial.transform = l
            .transpose()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Chebyshev Gram factor".into()))?;
        Ok(trial)
    }

    pub fn n_x(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.coeffs.ncols()
    }

    fn raw_time(&self, t: f64) -> (nalgebra::DVector<f64>, nalgebra::DVector<f64>) {
        let n = self.n_t();
        let s = 2.0 * t / self.t_end - 1.0;
        let (c, dc) = chebyshev(n, s);
        let raw = nalgebra::DVector::from_fn(n, |l, _| c[l + 1] - if l % 2 == 0 { -1.0 } else { 1.0 });
        let draw = nalgebra::DVector::from_fn(n, |l, _| dc[l + 1] * 2.0 / self.t_end);
        (raw, draw)
    }

    /// `χ_j(t)` and `χ_j'(t)`.
    pub fn time_basis(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (raw, draw) = self.raw_time(t);
        let m = self.transform.transpose();
        ((&m * raw).as_slice().to_vec(), (&m * draw).as_slice().to_vec())
    }

    /// `sin(kπx)` and its derivative for `k = 1..=n_x`.
    pub fn space_basis(&self, x: f64) -> (Vec<f64>, Vec<f64>) {
        let pi = std::f64::consts::PI;
        (1..=self.n_x())
            .map(|k| {
                let w = k as f64 * pi;
                let (s, c) = (w * x).sin_cos();
                (s, w * c)
            })
            .unzip()
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (s, _) = self.space_basis(x);
        let (chi, _) = self.time_basis(t);
        let mut v = self.u0.value(x);
        for k in 0..self.n_x() {
            for l in 0..self.n_t() {
                v += self.coeffs[(k, l)] * s[k] * chi[l];
            }
        }
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.coeffs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurgersConfig {
    pub n_x: usize,
    pub n_t: usize,
    /// End of the pre-shock window.
    pub t_end: f64,
    pub max_iters: usize,
    pub lbfgs_history: usize,
    pub grad_tol: f64,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self {
            n_x: 96,
            n_t: 16,
            t_end: 0.3,
            max_iters: 10000,
            lbfgs_history: 20,
            grad_tol: 1e-14,
        }
    }
}

impl BurgersConfig {
    /// Zero-coefficient trial with this configuration's sizes and window.
    pub fn trial(&self, u0: Profile1D) -> Result<SpectralTrial> {
        SpectralTrial::new(u0, self.n_x, self.n_t, self.t_end)
    }
}

#[derive(Debug, Clone)]
pub struct BurgersSolution {
    pub trial: SpectralTrial,
    /// `(Σ_v r_v²)^{1/2}` over the test space.
    pub residual: f64,
    pub initial_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
}

/// Tabulated quadrature data for the weak residual.
struct WeakResidual {
    s: DMatrix<f64>,
    ds: DMatrix<f64>,
    phi: DMatrix<f64>,
    dphi: DMatrix<f64>,
    /// `W_x S` and `W_t Φ`: weighted test functions (same family as the trial).
    ws: DMatrix<f64>,
    wphi: DMatrix<f64>,
    u0: DMatrix<f64>,
    du0: DMatrix<f64>,
}

impl WeakResidual {
    fn new(trial: &SpectralTrial) -> Self {
        let (nx, nt) = (trial.n_x(), trial.n_t());
        let xr = rule_with_points(0.0, 1.0, (6 * nx).max(96));
        let tr = Rule1D::uniform(0.0, trial.t_end, 1, (3 * nt).div_ceil(2) + 2);
        let (qx, qt) = (xr.len(), tr.len());
        let mut s = DMatrix::zeros(qx, nx);
        let mut ds = DMatrix::zeros(qx, nx);
        let mut u0 = DMatrix::zeros(qx, qt);
        let mut du0 = DMatrix::zeros(qx, qt);
        for (q, &x) in xr.points.iter().enumerate() {
            let (a, b) = trial.space_basis(x);
            for k in 0..nx {
                s[(q, k)] = a[k];
                ds[(q, k)] = b[k];
            }
            let (v, dv) = (trial.u0.value(x), trial.u0.deriv(1, x));
            for c in 0..qt {
                u0[(q, c)] = v;
                du0[(q, c)] = dv;
            }
        }
        let mut phi = DMatrix::zeros(qt, nt);
        let mut dphi = DMatrix::zeros(qt, nt);
        for (q, &t) in tr.points.iter().enumerate() {
            let (a, b) = trial.time_basis(t);
            for l in 0..nt {
                phi[(q, l)] = a[l];
                dphi[(q, l)] = b[l];
            }
        }
        let ws = DMatrix::from_fn(qx, nx, |q, k| xr.weights[q] * s[(q, k)]);
        let wphi = DMatrix::from_fn(qt, nt, |q, l| tr.weights[q] * phi[(q, l)]);
        Self { s, ds, phi, dphi, ws, wphi, u0, du0 }
    }

    /// `Σ r²` and its gradient with respect to the coefficients.
    fn eval(&self, c: &DMatrix<f64>, grad: Option<&mut [f64]>) -> f64 {
        let u = &self.u0 + &self.s * c * self.phi.transpose();
        let ux = &self.du0 + &self.ds * c * self.phi.transpose();
        let ut = &self.s * c * self.dphi.transpose();
        let res = ut + u.component_mul(&ux);
        let r = self.ws.transpose() * &res * &self.wphi;
        let value = r.norm_squared();
        if let Some(g) = grad {
            // Adjoint field Λ = 2 W_x S r Φᵀ W_t on the quadrature grid.
            let lam = 2.0 * &self.ws * &r * self.wphi.transpose();
            let gm = self.s.transpose() * &lam * &self.dphi
                + self.s.transpose() * lam.component_mul(&ux) * &self.phi
                + self.ds.transpose() * lam.component_mul(&u) * &self.phi;
            g.copy_from_slice(gm.as_slice());
        }
        value
    }
}

/// Weak residual norm of the current trial.
pub fn burgers_residual(trial: &SpectralTrial) -> f64 {
    WeakResidual::new(trial).eval(&trial.coeffs, None).sqrt()
}

/// Minimise the weak residual from the trial's current coefficients.
pub fn burgers_weak_solve(trial: SpectralTrial, config: &BurgersConfig) -> Result<BurgersSolution> {
    if config.max_iters == 0 || config.lbfgs_history == 0 {
        return Err(invalid("max_iters and lbfgs_history must be >= 1"));
    }
    let start = Instant::now();
    let wr = WeakResidual::new(&trial);
    let (nx, nt) = (trial.n_x(), trial.n_t());
    let initial = wr.eval(&trial.coeffs, None).sqrt();
    let mut x = trial.coeffs.as_slice().to_vec();
    let cfg = LbfgsConfig {
        max_iters: config.max_iters,
        history: config.lbfgs_history,
        grad_tol: config.grad_tol,
        rel_tol: 0.0,
        ..Default::default()
    };
    let out = lbfgs(&mut x, &cfg, |p, g| wr.eval(&DMatrix::from_column_slice(nx, nt, p), Some(g)));
    if !out.value.is_finite() {
        return Err(Error::NonFinite("Burgers weak residual".into()));
    }
    let mut trial = trial;
    trial.coeffs = DMatrix::from_column_slice(nx, nt, &x);
    Ok(BurgersSolution {
        trial,
        residual: out.value.sqrt(),
        initial_residual: initial,
        iterations: out.iterations,
        converged: !matches!(out.stop, LbfgsStop::MaxIterations | LbfgsStop::NonFinite),
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Exact pre-shock value `u₀(ξ)` with `x = ξ + u₀(ξ)t`, found by bisection.
/// Queries where characteristics have crossed somewhere within reach of `x` are rejected.
pub fn burgers_characteristics_oracle(u0: impl Fn(f64) -> f64, x: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !x.is_finite() {
        return Err(invalid("need finite x and t >= 0"));
    }
    if t == 0.0 {
        return Ok(u0(x));
    }
    let g = |xi: f64| xi + u0(xi) * t - x;
    // Bracket around x, widening until the sign changes.
    let mut half = 1.0;
    let (mut lo, mut hi) = (x - half, x + half);
    while g(lo) > 0.0 || g(hi) < 0.0 {
        half *= 2.0;
        if half > 1e6 {
            return Err(invalid("no characteristic reaches the query point"));
        }
        lo = x - half;
        hi = x + half;
    }
    // Characteristics cross iff ξ ↦ ξ + u₀(ξ)t stops increasing.
    const SAMPLES: usize = 4096;
    let h = (hi - lo) / SAMPLES as f64;
    let mut min_slope = f64::INFINITY;
    let mut prev = g(lo);
    for i in 1..=SAMPLES {
        let cur = g(lo + i as f64 * h);
        min_slope = min_slope.min((cur - prev) / h);
        prev = cur;
    }
    if min_slope <= 0.0 {
        // 1 + u₀' t = slope, so the shock time is t / (1 − slope).
        return Err(Error::PostShock { t, shock_time: t / (1.0 - min_slope) });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(u0(0.5 * (lo + hi)))
}

/// Max abs error against the characteristics oracle on an `n × n` grid over
/// `[0,1] × [0, t_max]`, endpoints included.
pub fn burgers_max_error(trial: &SpectralTrial, t_max: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(invalid("grid needs n >= 2"));
    }
    let u0 = |x: f64| trial.u0.value(x);
    let mut worst = 0.0f64;
    for i in 0..n {
        let t = t_max * i as f64 / (n - 1) as f64;
        for j in 0..n {
            let x = j as f64 / (n - 1) as f64;
            let exact = burgers_characteristics_oracle(u0, x, t)?;
            worst = worst.max((trial.eval(x, t) - exact).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_basis_is_orthonormal_and_vanishes_initially() {
        let trial = SpectralTrial::new(Profile1D::Constant { value: 0.0 }, 2, 6, 0.3).unwrap();
        let rule = Rule1D::uniform(0.0, 0.3, 1, 10);
        let mut gram = DMatrix::<f64>::zeros(6, 6);
        for (&t, &w) in rule.points.iter().zip(&rule.weights) {
            let (c, _) = trial.time_basis(t);
            for a in 0..6 {
                for b in 0..6 {
                    gram[(a, b)] += w * c[a] * c[b];
                }
            }
        }
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-11);
        assert!(trial.time_basis(0.0).0.iter().all(|v| v.abs() < 1e-12));
        let (c, dc) = trial.time_basis(0.17);
        let (c2, _) = trial.time_basis(0.17 + 1e-6);
        for l in 0..6 {
            assert!(((c2[l] - c[l]) / 1e-6 - dc[l]).abs() < 1e-3 * (1.0 + dc[l].abs()));
        }
    }

    #[test]
    fn trial_honours_initial_and_boundary_data() {
        let mut trial = SpectralTrial::new(Profile1D::Sine { frequency: 1.0 }, 5, 4, 0.3).unwrap();
        trial.coeffs = DMatrix::from_fn(5, 4, |k, l| ((k * 7 + l * 3) % 5) as f64 - 2.0);
        for &x in &[0.0, 0.2, 0.77] {
            assert!((trial.eval(x, 0.0) - (std::f64::consts::PI * x).sin()).abs() < 1e-12);
        }
        for &t in &[0.0, 0.1, 0.3] {
            assert!(trial.eval(0.0, t).abs() < 1e-12 && trial.eval(1.0, t).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let mut trial = SpectralTrial::new(Profile1D::Sine { frequency: 1.0 }, 4, 3, 0.3).unwrap();
        trial.coeffs = DMatrix::from_fn(4, 3, |k, l| 0.1 * ((k + 2 * l) as f64).sin());
        let wr = WeakResidual::new(&trial);
        let mut g = vec![0.0; 12];
        wr.eval(&trial.coeffs, Some(&mut g));
        for i in 0..12 {
            let h = 1e-6;
            let mut p = trial.coeffs.clone();
            p.as_mut_slice()[i] += h;
            let mut m = trial.coeffs.clone();
            m.as_mut_slice()[i] -= h;
            let fd = (wr.eval(&p, None) - wr.eval(&m, None)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn null_and_constant_states_have_zero_residual() {
        for v in [0.0, 0.7] {
            let trial = SpectralTrial::new(Profile1D::Constant { value: v }, 6, 4, 0.3).unwrap();
            assert!(burgers_residual(&trial) < 1e-14);
            let sol = burgers_weak_solve(trial, &BurgersConfig { max_iters: 10, ..Default::default() }).unwrap();
            assert!(sol.residual < 1e-14);
            assert!(sol.trial.coeffs.amax() < 1e-12);
            assert!((sol.trial.eval(0.4, 0.2) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_simple_cases() {
        let u0 = |x: f64| (std::f64::consts::PI * x).sin();
        assert_eq!(burgers_characteristics_oracle(u0, 0.3, 0.0).unwrap(), u0(0.3));
        assert!((burgers_characteristics_oracle(|_| 0.4, 0.3, 0.5).unwrap() - 0.4).abs() < 1e-15);
        let v = burgers_characteristics_oracle(u0, 0.5, 0.2).unwrap();
        // ξ + sin(πξ)·0.2 = 0.5 at the returned value's foot point.
        let xi = (v.asin()) / std::f64::consts::PI;
        assert!((xi + v * 0.2 - 0.5).abs() < 1e-12);
        assert!(matches!(burgers_characteristics_oracle(u0, 0.9, 0.4), Err(Error::PostShock { .. })));
    }
}
