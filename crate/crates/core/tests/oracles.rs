//! Independent oracles for the benchmark formula, inversion, the plume
//! reference and the Burgers characteristics solution.

use sna_core::bench::{borehole, BOREHOLE_RANGES};
use sna_core::inversion::{ensemble_envelope, invert, InversionConfig};
use sna_core::model::{Activation, CpModel};
use sna_core::splines::SplineBasis1D;
use sna_core::variational::problem::{ParamSource, PlumeSetup};
use sna_core::variational::{burgers_characteristics_oracle, semi_analytic_reference};

#[test]
fn borehole_matches_the_written_out_formula() {
    // Q = 2π Tu (Hu − Hl) / (ln(r/rw) [1 + 2 L Tu / (ln(r/rw) rw² Kw) + Tu/Tl])
    let oracle = |rw: f64, r: f64, tu: f64, hu: f64, tl: f64, hl: f64, l: f64, kw: f64| {
        let lr = (r / rw).ln();
        2.0 * std::f64::consts::PI * tu * (hu - hl) / (lr * (1.0 + 2.0 * l * tu / (lr * rw * rw * kw) + tu / tl))
    };
    let mid: Vec<f64> = BOREHOLE_RANGES.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let lo: Vec<f64> = BOREHOLE_RANGES.iter().map(|r| r.0).collect();
    let hi: Vec<f64> = BOREHOLE_RANGES.iter().map(|r| r.1).collect();
    for p in [mid, lo, hi] {
        let want = oracle(p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]);
        let got = borehole(&p).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
    }
}

fn bump_model() -> CpModel {
    let b = SplineBasis1D::new(3, 8, (0.0, 1.0)).unwrap();
    let n = b.n_funcs();
    let mut m = CpModel::new(vec![b.clone(), b], 1, Activation::Identity).unwrap();
    for dim in 0..2 {
        let blk = m.block_mut(0, dim);
        for (k, c) in blk.iter_mut().enumerate() {
            let s = k as f64 / (n - 1) as f64;
            *c = 1.0 + 0.6 * (2.0 * std::f64::consts::PI * s).sin() + 0.2 * dim as f64 * s;
        }
    }
    m
}

#[test]
fn inversion_covers_the_grid_scanned_level_set() {
    let m = bump_model();
    const G: usize = 512;
    let h = 1.0 / (G - 1) as f64;
    let mut f = vec![0.0; G * G];
    for i in 0..G {
        for j in 0..G {
            f[i * G + j] = m.eval(&[i as f64 * h, j as f64 * h]).unwrap();
        }
    }
    let mut sorted = f.clone();
    sorted.sort_by(f64::total_cmp);
    let target = sorted[sorted.len() / 2];
    // Cells whose corner values straddle the target.
    let mut cells = Vec::new();
    for i in 0..G - 1 {
        for j in 0..G - 1 {
            let c = [f[i * G + j], f[(i + 1) * G + j], f[i * G + j + 1], f[(i + 1) * G + j + 1]];
            let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo <= target && target <= hi {
                cells.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
            }
        }
    }
    assert!(cells.len() > 100);

    let cfg = InversionConfig { n_seeds: 256, seed: 9, ..Default::default() };
    let res = invert(&m, target, &cfg).unwrap();
    let sols: Vec<&[f64]> = res.converged().collect();
    assert!(sols.len() >= 200, "only {} converged", sols.len());
    let dist = |a: &[f64], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    for s in &sols {
        assert!((m.eval(s).unwrap() - target).abs() <= cfg.target_tol);
        let near = cells.iter().map(|c| dist(s, c)).fold(f64::INFINITY, f64::min);
        assert!(near <= h * std::f64::consts::SQRT_2, "solution {s:?} is {near} from the scanned level set");
    }
    let covered = cells
        .iter()
        .filter(|c| sols.iter().any(|s| dist(s, c) <= 0.05))
        .count();
    let coverage = covered as f64 / cells.len() as f64;
    assert!(coverage >= 0.9, "coverage {coverage}");
}

#[test]
fn envelope_matches_direct_statistics() {
    let m = bump_model();
    let res = invert(&m, 1.0, &InversionConfig { n_seeds: 64, seed: 2, ..Default::default() }).unwrap();
    let sols: Vec<Vec<f64>> = res.converged().map(|s| s.to_vec()).collect();
    assert!(sols.len() >= 2);
    let env = ensemble_envelope(&res).unwrap();
    assert_eq!(env.count, sols.len());
    for k in 0..2 {
        let col: Vec<f64> = sols.iter().map(|s| s[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        assert!((env.mean[k] - mean).abs() < 1e-14);
        assert_eq!(env.min[k], col.iter().copied().fold(f64::INFINITY, f64::min));
        assert_eq!(env.max[k], col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
}

/// Method-of-lines solve of `u_t + U·∇u = DΔu` on a uniform grid with
/// fourth-order differences, zero walls and classical RK4 in time.
fn finite_difference_plume(n: usize, omega: f64, d: f64, centre: [f64; 2], sigma: f64, t_end: f64) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    let idx = |i: usize, j: usize| i * n + j;
    let mut u = vec![0.0; n * n];
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let (x, y) = (i as f64 * h, j as f64 * h);
            u[idx(i, j)] = (-((x - centre[0]).powi(2) + (y - centre[1]).powi(2)) / (2.0 * sigma * sigma)).exp();
        }
    }
    let get = |u: &[f64], i: isize, j: isize| -> f64 {
        if i <= 0 || j <= 0 || i >= n as isize - 1 || j >= n as isize - 1 {
            0.0
        } else {
            u[i as usize * n + j as usize]
        }
    };
    let rhs = |u: &[f64], out: &mut [f64]| {
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let (ii, jj) = (i as isize, j as isize);
                let (x, y) = (i as f64 * h, j as f64 * h);
                let d1 = |a: f64, b: f64, c: f64, e: f64| (-e + 8.0 * c - 8.0 * b + a) / (12.0 * h);
                let d2 = |a: f64, b: f64, m: f64, c: f64, e: f64| (-e + 16.0 * c - 30.0 * m + 16.0 * b - a) / (12.0 * h * h);
                let m = get(u, ii, jj);
                let ux = d1(get(u, ii - 2, jj), get(u, ii - 1, jj), get(u, ii + 1, jj), get(u, ii + 2, jj));
                let uy = d1(get(u, ii, jj - 2), get(u, ii, jj - 1), get(u, ii, jj + 1), get(u, ii, jj + 2));
                let uxx = d2(get(u, ii - 2, jj), get(u, ii - 1, jj), m, get(u, ii + 1, jj), get(u, ii + 2, jj));
                let uyy = d2(get(u, ii, jj - 2), get(u, ii, jj - 1), m, get(u, ii, jj + 1), get(u, ii, jj + 2));
                let (wx, wy) = (-omega * (y - 0.5), omega * (x - 0.5));
                out[idx(i, j)] = -(wx * ux + wy * uy) + d * (uxx + uyy);
            }
        }
    };
    let steps = 2000;
    let dt = t_end / steps as f64;
    let len = n * n;
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for _ in 0..steps {
        rhs(&u, &mut k1);
        tmp.iter_mut().zip(&u).zip(&k1).for_each(|((t, a), k)| *t = a + 0.5 * dt * k);
        rhs(&tmp, &mut k2);
        tmp.iter_mut().zip(&u).zip(&k2).for_each(|((t, a), k)| *t = a + 0.5 * dt * k);
        rhs(&tmp, &mut k3);
        tmp.iter_mut().zip(&u).zip(&k3).for_each(|((t, a), k)| *t = a + dt * k);
        rhs(&tmp, &mut k4);
        for p in 0..len {
            u[p] += dt / 6.0 * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]);
        }
    }
    u
}

#[test]
fn plume_reference_matches_finite_differences_after_a_quarter_turn() {
    let (omega, d) = (std::f64::consts::FRAC_PI_2, 0.001);
    let n = 128;
    let fd = finite_difference_plume(n, omega, d, [0.35, 0.5], 0.08, 1.0);
    let plume = PlumeSetup {
        n_space: 2,
        centre: vec![0.35, 0.5],
        sigma0: 0.08,
        omega: ParamSource::Fixed(omega),
        diffusivity: ParamSource::Fixed(d),
        time_index: 2,
    };
    let h = 1.0 / (n - 1) as f64;
    let mut sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = semi_analytic_reference(&plume, &[i as f64 * h, j as f64 * h, 1.0]);
            sq += (fd[i * n + j] - r).powi(2);
        }
    }
    let err = (sq / (n * n) as f64).sqrt();
    assert!(err <= 1e-3, "L2 {err}");
    // Peak moved from (0.35, 0.5) to (0.5, 0.35).
    let imax = (0..n * n).max_by(|&a, &b| fd[a].total_cmp(&fd[b])).unwrap();
    let (px, py) = ((imax / n) as f64 * h, (imax % n) as f64 * h);
    assert!((px - 0.5).abs() <= h && (py - 0.35).abs() <= h, "peak at ({px}, {py})");
}

/// First-order Godunov scheme with the exact Riemann flux for `f(u) = u²/2`.
fn godunov(u0: impl Fn(f64) -> f64, cells: usize, t_end: f64) -> Vec<f64> {
    let h = 1.0 / cells as f64;
    let mut u: Vec<f64> = (0..cells).map(|i| u0((i as f64 + 0.5) * h)).collect();
    let flux = |l: f64, r: f64| {
        if l <= r {
            // Rarefaction: minimum of f over [l, r].
            if l > 0.0 {
                0.5 * l * l
            } else if r < 0.0 {
                0.5 * r * r
            } else {
                0.0
            }
        } else {
            // Shock: maximum of f at the endpoints.
            (0.5 * l * l).max(0.5 * r * r)
        }
    };
    let mut t = 0.0;
    let mut next = vec![0.0; cells];
    while t < t_end {
        let amax = u.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
        let dt = (0.45 * h / amax).min(t_end - t);
        for i in 0..cells {
            let left = if i == 0 { 0.0 } else { u[i - 1] };
            let right = if i + 1 == cells { 0.0 } else { u[i + 1] };
            next[i] = u[i] - dt / h * (flux(u[i], right) - flux(left, u[i]));
        }
        std::mem::swap(&mut u, &mut next);
        t += dt;
    }
    u
}

#[test]
fn characteristics_agree_with_godunov() {
    let u0 = |x: f64| (std::f64::consts::PI * x).sin();
    let cells = 4000;
    let g = godunov(u0, cells, 0.2);
    let at = |x: f64| {
        let s = x * cells as f64 - 0.5;
        let i = s.floor() as usize;
        let w = s - i as f64;
        (1.0 - w) * g[i] + w * g[i + 1]
    };
    for x in [0.5, 0.25, 0.8] {
        let exact = burgers_characteristics_oracle(u0, x, 0.2).unwrap();
        assert!((exact - at(x)).abs() <= 1e-3, "x={x}: {exact} vs {}", at(x));
    }
}
