use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sna_core::bench::{make_dataset, BoreholeSpec, Generator};
use sna_core::model::CpModel;
use sna_core::training::{fit_supervised, mse, r2_score, Dataset, Optimiser, TargetScaling, TrainConfig};

fn random_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..3.0)).collect();
    let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
    (a, b)
}

#[test]
fn r2_matches_the_textbook_formula() {
    for seed in 0..10 {
        let (y, p) = random_pair(257, seed);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let sse: f64 = y.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
        let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
        assert!((r2_score(&y, &p).unwrap() - (1.0 - sse / sst)).abs() <= 1e-12);
    }
    let y = [1.0, 3.0, 2.0, 6.0];
    let mean = [3.0; 4];
    assert!(r2_score(&y, &mean).unwrap().abs() <= 1e-15);
}

#[test]
fn mse_matches_its_definition() {
    for seed in 0..10 {
        let (y, p) = random_pair(101, seed);
        let want = y.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
        assert!((mse(&y, &p).unwrap() - want).abs() <= 1e-15);
    }
    let y = [0.5, 1.5, -2.0];
    let shifted: Vec<f64> = y.iter().map(|v| v + 0.1).collect();
    assert!((mse(&y, &shifted).unwrap() - 0.01).abs() <= 1e-15);
    assert_eq!(mse(&y, &y).unwrap(), 0.0);
    assert!(mse(&y, &y[..2]).is_err());
}

#[test]
fn data_generated_by_a_rank_one_model_is_recovered() {
    let mut truth = CpModel::uniform(3, 1, 3, 4).unwrap();
    truth.init_uniform(21);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..3 * 3000).map(|_| rng.random::<f64>()).collect();
    let y = truth.eval_batch(&x).unwrap();
    let ds = Dataset::from_raw(3, &x, &y, None, Some(vec![(0.0, 1.0); 3]), TargetScaling::None, 1).unwrap();
    let model = CpModel::uniform(3, 1, 3, 4).unwrap().with_init(8);
    let cfg = TrainConfig { optimiser: Optimiser::Als, max_epochs: 50, ..Default::default() };
    let (_, rep) = fit_supervised(&model, &ds, &cfg).unwrap();
    assert!(rep.test_mse <= 1e-10, "{rep:?}");
}

/// Doubling the rank from a warm start never costs more than 1% of the
/// training error: the larger model contains the smaller one.
#[test]
fn doubling_the_rank_from_a_warm_start_does_not_hurt() {
    let ds = make_dataset(&Generator::Borehole(BoreholeSpec { n_samples: 20_000, seed: 2, ..Default::default() })).unwrap();
    let cfg = TrainConfig { max_epochs: 50, lbfgs_iters: 300, ..Default::default() };
    let small = CpModel::uniform(8, 2, 3, 3).unwrap().with_init(1);
    let (fitted, rep_small) = fit_supervised(&small, &ds, &cfg).unwrap();
    let mut big = fitted.clone();
    let fresh = CpModel::uniform(8, 2, 3, 3).unwrap().with_init(99);
    let stride = fresh.coeffs().len() / 2;
    for j in 0..2 {
        big.push_mode(&fresh.coeffs()[j * stride..(j + 1) * stride], 1e-3).unwrap();
    }
    let (_, rep_big) = fit_supervised(&big, &ds, &TrainConfig { max_epochs: 1, lbfgs_iters: 300, ..cfg }).unwrap();
    assert!(
        rep_big.final_train_mse <= 1.01 * rep_small.final_train_mse,
        "rank 4: {} vs rank 2: {}",
        rep_big.final_train_mse,
        rep_small.final_train_mse
    );
}
