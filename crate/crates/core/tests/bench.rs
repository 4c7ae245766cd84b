use sna_core::bench::*;
use sna_core::training::train_test_split;

#[test]
fn sobol_g_at_the_upper_corner_matches_a_direct_product() {
    let a = sobol_g_default_a();
    let mut want = 1.0;
    for &ai in &a {
        // |4·1 − 2| = 2 in every factor.
        want *= (2.0 + ai) / (1.0 + ai);
    }
    let got = sobol_g_clean(&[1.0; 20], &a).unwrap();
    assert!((got - want).abs() <= 1e-12 * want);
    let closed = 2f64.powi(5) * 1.4f64.powi(5) * 1.2f64.powi(10);
    assert!((got - closed).abs() <= 1e-12 * closed);
}

#[test]
fn permuting_within_an_equal_coefficient_block_changes_nothing() {
    let a = sobol_g_default_a();
    let pts = lhs_sample(50, 20, 17).unwrap();
    for p in pts.chunks(20) {
        let base = sobol_g_clean(p, &a).unwrap();
        for (lo, hi) in [(0, 5), (5, 10), (10, 20)] {
            let mut q = p.to_vec();
            q[lo..hi].reverse();
            q[lo..hi].rotate_left(1);
            let v = sobol_g_clean(&q, &a).unwrap();
            assert!((v - base).abs() <= 1e-14 * base.abs().max(1e-300), "block {lo}..{hi}");
        }
    }
}

#[test]
fn borehole_is_not_linear_in_the_upper_transmissivity() {
    let p: Vec<f64> = BOREHOLE_RANGES.iter().map(|(a, b)| a + 0.37 * (b - a)).collect();
    let mut p2 = p.clone();
    p2[2] *= 2.0;
    let (u, u2) = (borehole(&p).unwrap(), borehole(&p2).unwrap());
    assert!((u2 - 2.0 * u).abs() > 1e-6 * u.abs(), "{u2} vs 2·{u}");
}

#[test]
fn borehole_is_positive_over_the_standard_ranges() {
    let u = lhs_sample(20_000, 8, 5).unwrap();
    for row in u.chunks(8) {
        let p: Vec<f64> = row.iter().zip(&BOREHOLE_RANGES).map(|(v, (a, b))| a + v * (b - a)).collect();
        assert!(p[3] > p[5]);
        assert!(borehole(&p).unwrap() > 0.0);
    }
}

#[test]
fn borehole_rejects_invalid_inputs() {
    let mut p: Vec<f64> = BOREHOLE_RANGES.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    p[4] = -1.0;
    assert!(borehole(&p).is_err());
    assert!(borehole(&p[..7]).is_err());
}

#[test]
fn injected_noise_has_the_requested_statistics() {
    let spec = SobolGSpec::default();
    let n = 100_000u64;
    let p = [0.3; 20];
    let eps: Vec<f64> = (0..n)
        .map(|i| {
            let (c, y) = sobol_g(&p, &spec, i).unwrap();
            y - c
        })
        .collect();
    let mean = eps.iter().sum::<f64>() / n as f64;
    let sd = (eps.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let sigma = spec.noise_sigma;
    assert!(mean.abs() <= 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
    assert!((sd - sigma).abs() <= 0.05 * sigma, "sd {sd}");
}

#[test]
fn full_size_borehole_dataset_splits_seventy_thirty() {
    let ds = make_dataset(&Generator::Borehole(BoreholeSpec::default())).unwrap();
    assert_eq!(ds.len(), 100_000);
    assert!(ds.x.iter().all(|v| (0.0..=1.0).contains(v)));
    let (train, test) = train_test_split(&ds, 0.7, ds.split_seed).unwrap();
    assert_eq!((train.len(), test.len()), (70_000, 30_000));
}

#[test]
fn singleton_and_repeated_datasets() {
    let one = make_dataset(&Generator::SobolG(SobolGSpec { n_samples: 1, ..Default::default() })).unwrap();
    assert_eq!(one.len(), 1);
    let g = Generator::Borehole(BoreholeSpec { n_samples: 500, seed: 8, ..Default::default() });
    let a = make_dataset(&g).unwrap();
    let b = make_dataset(&g).unwrap();
    assert_eq!(a.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.x.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a, b);
}

#[test]
fn suites_meet_their_parameter_budgets() {
    assert_eq!(RegressionSuite::borehole(0).parameter_count(), 240);
    assert_eq!(RegressionSuite::sobol_g(0).parameter_count(), 1560);
    assert_eq!(RegressionSuite::borehole(0).model().unwrap().parameter_count(), 240);
    assert_eq!(RegressionSuite::sobol_g(0).model().unwrap().parameter_count(), 1560);
    assert_eq!(RegressionSuite::witness(0).model().unwrap().rank(), 1);
}
