//! Gradient-based minimisers: Adam and L-BFGS with a strong-Wolfe line search.
//!
//! Objectives are closures `f(x, grad) -> value` that overwrite `grad`.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        let c = self.config;
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t);
        let b2t = 1.0 - c.beta2.powi(self.t);
        for ((xi, gi), (mi, vi)) in x
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
            *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
            let mhat = *mi / b1t;
            let vhat = *vi / b2t;
            *xi -= c.learning_rate * mhat / (vhat.sqrt() + c.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub max_iters: usize,
    pub history: usize,
    /// Stop when `‖g‖∞ ≤ grad_tol`.
    pub grad_tol: f64,
    /// Stop when the relative decrease over one iteration falls below this.
    pub rel_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            history: 10,
            grad_tol: 1e-12,
            rel_tol: 1e-14,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStop {
    GradientTolerance,
    RelativeDecrease,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: LbfgsStop,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimise `f` in place starting from `x`.
pub fn lbfgs<F>(x: &mut [f64], config: &LbfgsConfig, mut f: F) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut evals = 1;
    if !fx.is_finite() {
        return LbfgsOutcome {
            value: fx,
            iterations: 0,
            evaluations: evals,
            stop: LbfgsStop::NonFinite,
        };
    }
    let mut s_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(config.history);
    let mut y_hist: VecDeque<Vec<f64>> = VecDeque::with_capacity(config.history);
    let mut rho_hist: VecDeque<f64> = VecDeque::with_capacity(config.history);
    let mut dir = vec![0.0; n];
    let mut alpha = vec![0.0; config.history];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut stop = LbfgsStop::MaxIterations;
    let mut iters = 0;

    while iters < config.max_iters {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= config.grad_tol {
            stop = LbfgsStop::GradientTolerance;
            break;
        }
        // Two-loop recursion.
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        let k = s_hist.len();
        for i in (0..k).rev() {
            alpha[i] = rho_hist[i] * dot(&s_hist[i], &dir);
            for (d, yv) in dir.iter_mut().zip(&y_hist[i]) {
                *d -= alpha[i] * yv;
            }
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0)
        };
        dir.iter_mut().for_each(|d| *d *= gamma);
        for i in 0..k {
            let beta = rho_hist[i] * dot(&y_hist[i], &dir);
            for (d, sv) in dir.iter_mut().zip(&s_hist[i]) {
                *d += (alpha[i] - beta) * sv;
            }
        }
        let mut dg = dot(&dir, &g);
        if dg >= 0.0 {
            // Not a descent direction: restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            let scale = 1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi * scale);
            dg = dot(&dir, &g);
        }

        let ls = strong_wolfe(x, fx, &g, &dir, dg, config, &mut f, &mut x_new, &mut g_new);
        evals += ls.evals;
        let Some(f_new) = ls.value else {
            stop = LbfgsStop::LineSearchFailed;
            break;
        };
        if !f_new.is_finite() {
            stop = LbfgsStop::NonFinite;
            break;
        }
        iters += 1;
        let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        let f_old = fx;
        fx = f_new;
        if sy > 1e-300 {
            if s_hist.len() == config.history {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
            rho_hist.push_back(1.0 / sy);
            s_hist.push_back(s);
            y_hist.push_back(y);
        }
        if (f_old - fx).abs() <= config.rel_tol * f_old.abs().max(fx.abs()).max(1e-300) {
            stop = LbfgsStop::RelativeDecrease;
            break;
        }
    }
    LbfgsOutcome {
        value: fx,
        iterations: iters,
        evaluations: evals,
        stop,
    }
}

struct LineSearch {
    value: Option<f64>,
    evals: usize,
}

/// Strong-Wolfe line search (bracketing + zoom with cubic interpolation).
/// On success `x_new`/`g_new` hold the accepted point.
#[allow(clippy::too_many_arguments)]
fn strong_wolfe<F>(
    x: &[f64],
    f0: f64,
    g0: &[f64],
    dir: &[f64],
    dg0: f64,
    config: &LbfgsConfig,
    f: &mut F,
    x_new: &mut [f64],
    g_new: &mut [f64],
) -> LineSearch
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let _ = g0;
    let mut evals = 0;
    let mut eval = |t: f64, x_new: &mut [f64], g_new: &mut [f64], evals: &mut usize| -> (f64, f64) {
        for ((xn, xi), di) in x_new.iter_mut().zip(x).zip(dir) {
            *xn = xi + t * di;
        }
        *evals += 1;
        let v = f(x_new, g_new);
        (v, dot(g_new, dir))
    };

    let (mut t_prev, mut f_prev, mut dg_prev) = (0.0, f0, dg0);
    let mut t = 1.0;
    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None;
    for i in 0..config.max_line_search {
        let (ft, dgt) = eval(t, x_new, g_new, &mut evals);
        if !ft.is_finite() {
            t = 0.5 * (t_prev + t);
            continue;
        }
        if ft > f0 + config.c1 * t * dg0 || (i > 0 && ft >= f_prev) {
            bracket = Some((t_prev, f_prev, dg_prev, t, ft, dgt));
            break;
        }
        if dgt.abs() <= -config.c2 * dg0 {
            return LineSearch {
                value: Some(ft),
                evals,
            };
        }
        if dgt >= 0.0 {
            bracket = Some((t, ft, dgt, t_prev, f_prev, dg_prev));
            break;
        }
        t_prev = t;
        f_prev = ft;
        dg_prev = dgt;
        t *= 2.0;
    }
    let Some((mut lo, mut f_lo, mut dg_lo, mut hi, mut f_hi, mut dg_hi)) = bracket else {
        return LineSearch { value: None, evals };
    };
    for _ in 0..config.max_line_search {
        let tj = cubic_min(lo, f_lo, dg_lo, hi, f_hi, dg_hi);
        let (ft, dgt) = eval(tj, x_new, g_new, &mut evals);
        if !ft.is_finite() || ft > f0 + config.c1 * tj * dg0 || ft >= f_lo {
            hi = tj;
            f_hi = ft;
            dg_hi = dgt;
        } else {
            if dgt.abs() <= -config.c2 * dg0 {
                return LineSearch {
                    value: Some(ft),
                    evals,
                };
            }
            if dgt * (hi - lo) >= 0.0 {
                hi = lo;
                f_hi = f_lo;
                dg_hi = dg_lo;
            }
            lo = tj;
            f_lo = ft;
            dg_lo = dgt;
        }
        if (hi - lo).abs() < 1e-16 * lo.abs().max(1e-16) {
            break;
        }
    }
    // Accept the best sufficient-decrease point found, if any.
    if lo > 0.0 && f_lo < f0 {
        let (ft, _) = eval(lo, x_new, g_new, &mut evals);
        return LineSearch {
            value: Some(ft),
            evals,
        };
    }
    LineSearch { value: None, evals }
}

/// Minimiser of the cubic interpolating values and slopes at `a` and `b`,
/// safeguarded to the interior of the interval.
fn cubic_min(a: f64, fa: f64, ga: f64, b: f64, fb: f64, gb: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let width = hi - lo;
    let fallback = 0.5 * (a + b);
    if !(fa.is_finite() && fb.is_finite() && ga.is_finite() && gb.is_finite()) {
        return fallback;
    }
    let d1 = ga + gb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if disc < 0.0 {
        return fallback;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (gb + d2 - d1) / (gb - ga + 2.0 * d2);
    if !t.is_finite() || t <= lo + 0.1 * width || t >= hi - 0.1 * width {
        return fallback;
    }
    t
}
