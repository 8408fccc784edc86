#![allow(clippy::needless_range_loop)]

mod common;

use ndarray::Array2;
use pfnn_core::dataset::{generate_samples, GenerateOptions, SampleSetFile, SplitRatios};
use pfnn_core::mlp::{self, init_model};
use pfnn_core::pipeline::{self, ModelConfig};
use pfnn_core::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{finite_difference_gradient, load_case, random_config, relative_error};

#[test]
fn gradients_match_finite_differences() {
    for seed in 100..120 {
        let (model, x, y) = random_config(seed);
        let (loss, grads) = model.gradients(x.view(), y.view()).unwrap();
        assert!((loss - common::naive_loss(&model, &x, &y)).abs() < 1e-12);
        let analytic: Vec<f64> = grads
            .weights
            .iter()
            .flat_map(|w| w.iter().copied())
            .chain(grads.biases.iter().flat_map(|b| b.iter().copied()))
            .collect();
        let numeric = finite_difference_gradient(&model, &x, &y, 1e-6);
        assert_eq!(analytic.len(), model.n_params());
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(relative_error(*a, *n) < 1e-5, "seed {seed}: {a} vs {n}");
        }
    }
}

/// Normal equations `[X 1]ᵀ[X 1] β = [X 1]ᵀ y` by Gauss-Jordan elimination.
fn least_squares(x: &Array2<f64>, y: &[f64]) -> Vec<f64> {
    let (n, d) = x.dim();
    let m = d + 1;
    let row = |i: usize, j: usize| if j < d { x[[i, j]] } else { 1.0 };
    let mut a = vec![vec![0.0; m + 1]; m];
    for (r, a_r) in a.iter_mut().enumerate() {
        for c in 0..m {
            a_r[c] = (0..n).map(|i| row(i, r) * row(i, c)).sum();
        }
        a_r[m] = (0..n).map(|i| row(i, r) * y[i]).sum();
    }
    for c in 0..m {
        let p = (c..m)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                let pivot = a[c].clone();
                for (v, pv) in a[r].iter_mut().zip(&pivot) {
                    *v -= f * pv;
                }
            }
        }
    }
    (0..m).map(|r| a[r][m] / a[r][r]).collect()
}

#[test]
fn linear_model_converges_to_least_squares_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (n, d) = (200, 3);
    let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(0.0..1.0));
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| 0.7 * r[0] - 0.4 * r[1] + 0.2 * r[2] + 0.1 + rng.random_range(-0.05..0.05))
        .collect();
    let beta = least_squares(&x, &y);

    let ym = Array2::from_shape_vec((n, 1), y).unwrap();
    let empty = Array2::zeros((0, d));
    let cfg = TrainConfig {
        learning_rate: 0.1,
        batch_size: 200,
        epochs: 20_000,
        seed: 3,
    };
    let model = init_model(&[d, 1], 0.01, 9).unwrap();
    let (model, _) = mlp::train(
        model,
        x.view(),
        ym.view(),
        empty.view(),
        Array2::zeros((0, 1)).view(),
        &cfg,
        |_| {},
    )
    .unwrap();
    for j in 0..d {
        assert!((model.weights()[0][[0, j]] - beta[j]).abs() < 1e-3, "w{j}");
    }
    assert!((model.biases()[0][0] - beta[d]).abs() < 1e-3);
}

#[test]
fn smoothed_training_loss_does_not_increase_after_warmup() {
    let net = load_case("case9");
    let opts = GenerateOptions::new(1000, 0.1, 21);
    let set = generate_samples(&net, "case9", &opts).unwrap();
    let file = SampleSetFile::new(&set, &net, opts);
    let model_cfg = ModelConfig {
        hidden: vec![32; 3],
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let ck = pipeline::train_surrogate(
        &file,
        &model_cfg,
        &train_cfg,
        SplitRatios::default(),
        |_, _| {},
    )
    .unwrap();
    let losses: Vec<f64> = ck.heads[0]
        .trace
        .records
        .iter()
        .map(|r| r.train_mse)
        .collect();
    let window = 50;
    let averages: Vec<f64> = losses
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    for pair in averages.windows(2) {
        assert!(
            pair[1] <= pair[0] * (1.0 + 1e-9),
            "{} -> {}",
            pair[0],
            pair[1]
        );
    }
}

#[test]
fn checkpoint_round_trips_through_json() {
    let net = load_case("case9");
    let opts = GenerateOptions::new(120, 0.1, 2);
    let set = generate_samples(&net, "case9", &opts).unwrap();
    let file = SampleSetFile::new(&set, &net, opts);
    let model_cfg = ModelConfig {
        hidden: vec![6, 6],
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: 3,
        ..TrainConfig::default()
    };
    let ck = pipeline::train_surrogate(
        &file,
        &model_cfg,
        &train_cfg,
        SplitRatios::default(),
        |_, _| {},
    )
    .unwrap();
    let mut buf = Vec::new();
    ck.write(&mut buf).unwrap();
    let back = pipeline::Checkpoint::read(buf.as_slice()).unwrap();
    assert_eq!(back, ck);
    let row = &set.samples[0].input;
    assert_eq!(back.predict_pf(row).unwrap(), ck.predict_pf(row).unwrap());
}
