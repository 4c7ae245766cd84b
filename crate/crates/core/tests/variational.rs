//! Behaviour of the space–time–parameter solvers at small scale.

use std::time::Instant;

use sna_core::variational::problem::{poisson_nd, SineMode};
use sna_core::variational::reference::plume_l2_error_at;
use sna_core::variational::*;

fn slice() -> VariationalProblem {
    AdvectionDiffusionConfig::slice_3d(std::f64::consts::FRAC_PI_4, 0.001).build().unwrap()
}

#[test]
fn warm_started_ranks_never_raise_the_residual() {
    let cfg = ScalingConfig { ranks: vec![1, 2, 4, 8], resolutions: vec![8], mc_samples: 0, ..Default::default() };
    let t = scaling_study(&slice(), &cfg).unwrap();
    for w in t.rows.windows(2) {
        assert!(w[1].functional <= w[0].functional * (1.0 + 1e-10), "{:?}", t.rows);
    }
}

#[test]
fn doubling_resolution_at_sufficient_rank_is_fourth_order() {
    let cfg = ScalingConfig { ranks: vec![16], resolutions: vec![8, 16], mc_samples: 0, ..Default::default() };
    let t = scaling_study(&slice(), &cfg).unwrap();
    let ratio = (t.row(16, 8).unwrap().error / t.row(16, 16).unwrap().error).log2();
    assert!((3.0..=5.0).contains(&ratio), "log2 ratio {ratio}");
}

#[test]
fn six_dimensional_rank_four_beats_rank_one_on_the_reference_slice() {
    let p = AdvectionDiffusionConfig::default().build().unwrap();
    let pins = [(4, std::f64::consts::FRAC_PI_4), (5, 0.001)];
    let err = |rank| {
        let sol = als_solve(&p, &AlsConfig { rank, resolution: 8, max_sweeps: 200, ..Default::default() }).unwrap();
        plume_l2_error_at(&p, &sol, &pins, 24, 0, 0).unwrap().quadrature
    };
    let (e1, e4) = (err(1), err(4));
    assert!(e4 * 2.0 <= e1, "R=1 {e1}, R=4 {e4}");
}

/// Time per sweep against `d · R² · N` with `N` basis functions per dimension.
#[test]
fn sweep_cost_follows_the_separable_model() {
    let mut samples = Vec::new();
    for d in [2usize, 3, 4] {
        let modes = [SineMode { amplitude: 1.0, wavenumbers: vec![1; d] }];
        let p = poisson_nd(d, &modes, Formulation::LeastSquares).unwrap();
        for c in [8usize, 16] {
            let solver = AlsSolver::new(&p, c, 3).unwrap();
            for r in [2usize, 4, 8] {
                let cfg = AlsConfig { rank: r, resolution: c, max_sweeps: 10, rel_residual_tol: 0.0, ..Default::default() };
                let per = (0..3)
                    .map(|_| {
                        let init = solver.random_factors(r, 0);
                        let start = Instant::now();
                        let (_, _, _, sweeps) = solver.run(init, &cfg).unwrap();
                        start.elapsed().as_secs_f64() / sweeps as f64
                    })
                    .fold(f64::INFINITY, f64::min);
                // Basis functions per dimension.
                let n = (c + 3) as f64;
                samples.push((d, c, r, per / (d as f64 * (r * r) as f64 * n)));
            }
        }
    }
    let mean = (samples.iter().map(|s| s.3.ln()).sum::<f64>() / samples.len() as f64).exp();
    for s in &samples {
        eprintln!("d={} C={} R={} ratio/mean={:.2}", s.0, s.1, s.2, s.3 / mean);
    }
    for s in &samples {
        assert!(s.3 <= 4.0 * mean && s.3 >= mean / 4.0, "d={} C={} R={}: {:.2}x", s.0, s.1, s.2, s.3 / mean);
    }
}
