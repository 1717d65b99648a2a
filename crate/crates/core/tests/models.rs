use commentq_core::ann::{gradient_check, train_mlp, Activation, DenseLayer, MlpModel, MlpTrainConfig};
use commentq_core::corpus::Label;
use commentq_core::features::FeatureVector;
use commentq_core::svm::{train_linear, train_poly, PolyKernel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two classes on either side of `x + y = 0`, at least `gap` apart along the normal.
fn blobs(n: usize, gap: f64, seed: u64) -> (Vec<FeatureVector>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    while xs.len() < n {
        let p = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let along = (p[0] + p[1]) / 2f64.sqrt();
        if along.abs() < gap / 2.0 {
            continue;
        }
        xs.push(FeatureVector::from_dense(&p));
        ys.push(along.signum());
    }
    (xs, ys)
}

fn xor() -> (Vec<FeatureVector>, Vec<f64>) {
    let xs = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]
        .iter()
        .map(|p| FeatureVector::from_dense(p))
        .collect();
    (xs, vec![-1.0, 1.0, 1.0, -1.0])
}

fn as_label(y: f64) -> Label {
    if y > 0.0 {
        Label::Useful
    } else {
        Label::NotUseful
    }
}

#[test]
fn linear_svm_separates_blobs_with_unit_margin_after_rescale() {
    let (xs, ys) = blobs(200, 2.0, 3);
    let cfg = TrainConfig {
        lambda: 1e-3,
        epochs: 100,
        ..TrainConfig::default()
    };
    let model = train_linear(&xs, &ys, &cfg).unwrap();
    assert_eq!(model.dim(), 2);
    let margins: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y * model.score(x).unwrap()).collect();
    assert!(margins.iter().all(|&m| m > 0.0), "training accuracy below 1.0");
    let scale = 1.0 / margins.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(margins.iter().all(|m| m * scale >= 1.0 - 1e-3));
}

#[test]
fn poly_degree_one_agrees_with_linear_on_grid() {
    let (xs, ys) = blobs(200, 2.0, 5);
    let cfg = TrainConfig {
        lambda: 1e-3,
        epochs: 100,
        ..TrainConfig::default()
    };
    let linear = train_linear(&xs, &ys, &cfg).unwrap();
    let kernel = PolyKernel {
        degree: 1,
        gamma: 1.0,
        coef0: 0.0,
    };
    let poly = train_poly(&xs, &ys, &cfg, kernel).unwrap();
    // Jittered so no probe lies exactly on the blobs' true boundary x + y = 0,
    // where any two near-optimal separators may legitimately disagree.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut agree = 0;
    let mut total = 0;
    for i in 0..40 {
        for j in 0..40 {
            let p = FeatureVector::from_dense(&[
                -4.0 + 0.2 * (i as f64 + rng.random_range(0.0..1.0)),
                -4.0 + 0.2 * (j as f64 + rng.random_range(0.0..1.0)),
            ]);
            agree += (linear.predict(&p).unwrap().0 == poly.predict(&p).unwrap().0) as usize;
            total += 1;
        }
    }
    assert!(agree as f64 / total as f64 >= 0.99, "{agree}/{total}");
}

#[test]
fn xor_kernel_model_reproduces_training_labels() {
    let (xs, ys) = xor();
    let kernel = PolyKernel {
        degree: 2,
        gamma: 1.0,
        coef0: 1.0,
    };
    let model = train_poly(&xs, &ys, &TrainConfig::default(), kernel).unwrap();
    assert_eq!(model.support_vectors.len(), model.dual_coefs.len());
    assert!(!model.support_vectors.is_empty());
    for (x, &y) in xs.iter().zip(&ys) {
        assert_eq!(model.predict(x).unwrap().0, as_label(y));
    }
}

fn accuracy(model: &MlpModel, xs: &[FeatureVector], ys: &[f64]) -> f64 {
    let hits = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| (model.predict(x).unwrap().0 == Label::Useful) == (y == 1.0))
        .count();
    hits as f64 / xs.len() as f64
}

#[test]
fn mlp_learns_blobs() {
    let (xs, ys) = blobs(200, 2.0, 7);
    let ys: Vec<f64> = ys.iter().map(|&y| (y > 0.0) as u8 as f64).collect();
    let cfg = MlpTrainConfig {
        hidden_sizes: vec![8],
        activation: Activation::Relu,
        epochs: 50,
        ..MlpTrainConfig::default()
    };
    let trained = train_mlp(&xs, &ys, &cfg).unwrap();
    assert!(accuracy(&trained.model, &xs, &ys) >= 0.98);
    assert!(trained.loss_curve.last() < trained.loss_curve.first());
    assert_eq!(trained.loss_curve.len(), 50);
}

#[test]
fn mlp_learns_xor_with_tanh() {
    let (xs, ys) = xor();
    let ys: Vec<f64> = ys.iter().map(|&y| (y > 0.0) as u8 as f64).collect();
    let solved = (0..5).any(|seed| {
        let cfg = MlpTrainConfig {
            hidden_sizes: vec![4],
            activation: Activation::Tanh,
            learning_rate: 0.1,
            epochs: 2000,
            batch_size: 4,
            seed,
            ..MlpTrainConfig::default()
        };
        let trained = train_mlp(&xs, &ys, &cfg).unwrap();
        accuracy(&trained.model, &xs, &ys) == 1.0
    });
    assert!(solved);
}

fn sample_batch(seed: u64, n: usize, dim: usize) -> (Vec<FeatureVector>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            FeatureVector::from_dense(&v)
        })
        .collect();
    let ys = (0..n).map(|i| (i % 2) as f64).collect();
    (xs, ys)
}

#[test]
fn affine_network_gradient_matches_closed_form() {
    let (xs, ys) = sample_batch(1, 8, 4);
    let model = MlpModel::init(4, &[3], Activation::Identity, 2).unwrap();
    let grads = model.gradients(&xs, &ys).unwrap();
    let (hidden, out) = (&model.layers[0], &model.layers[1]);
    let n = xs.len() as f64;
    let mut g_w1 = [[0.0; 4]; 3];
    let mut g_b1 = [0.0; 3];
    let mut g_w2 = [0.0; 3];
    let mut g_b2 = 0.0;
    for (x, &y) in xs.iter().zip(&ys) {
        let x = x.to_dense();
        let z1: Vec<f64> = (0..3)
            .map(|j| hidden.biases[j] + (0..4).map(|k| hidden.weight(j, k) * x[k]).sum::<f64>())
            .collect();
        let z2 = out.biases[0] + (0..3).map(|j| out.weight(0, j) * z1[j]).sum::<f64>();
        let r = 1.0 / (1.0 + (-z2).exp()) - y;
        g_b2 += r / n;
        for j in 0..3 {
            g_w2[j] += r * z1[j] / n;
            g_b1[j] += r * out.weight(0, j) / n;
            for k in 0..4 {
                g_w1[j][k] += r * out.weight(0, j) * x[k] / n;
            }
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    assert!(close(grads[1].biases[0], g_b2));
    for j in 0..3 {
        assert!(close(grads[1].weight(0, j), g_w2[j]));
        assert!(close(grads[0].biases[j], g_b1[j]));
        for k in 0..4 {
            assert!(close(grads[0].weight(j, k), g_w1[j][k]));
        }
    }
}

#[test]
fn gradient_check_passes_for_every_activation() {
    for activation in Activation::ALL {
        for seed in 0..10 {
            let (xs, ys) = sample_batch(seed + 100, 8, 5);
            let model = MlpModel::init(5, &[6], activation, seed).unwrap();
            let err = gradient_check(&model, &xs, &ys, 1e-5).unwrap();
            assert!(err < 1e-4, "{activation:?} seed {seed}: {err}");
        }
    }
}

#[test]
fn coarse_epsilon_is_less_accurate() {
    let (xs, ys) = sample_batch(9, 8, 5);
    let model = MlpModel::init(5, &[6], Activation::Tanh, 9).unwrap();
    let fine = gradient_check(&model, &xs, &ys, 1e-5).unwrap();
    let coarse = gradient_check(&model, &xs, &ys, 1e-1).unwrap();
    assert!(coarse > fine, "coarse {coarse} fine {fine}");
}

#[test]
fn single_input_identity_network_is_monotone() {
    let layer = DenseLayer::from_rows(1, 1, &[0.7], vec![-0.2], Activation::Logistic);
    let model = MlpModel::new(vec![layer]).unwrap();
    let ps: Vec<f64> = (-20..=20)
        .map(|i| model.predict(&FeatureVector::from_dense(&[i as f64 * 0.25])).unwrap().1)
        .collect();
    assert!(ps.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn threshold_is_strict() {
    let zero = MlpModel::new(vec![DenseLayer::zeros(2, 1, Activation::Logistic)]).unwrap();
    let (label, p) = zero.predict(&FeatureVector::from_dense(&[1.0, -1.0])).unwrap();
    assert_eq!((label, p), (Label::NotUseful, 0.5));
    // logit(0.9) = ln 9
    let nine = DenseLayer::from_rows(1, 1, &[0.0], vec![9f64.ln()], Activation::Logistic);
    let (label, p) = MlpModel::new(vec![nine])
        .unwrap()
        .predict(&FeatureVector::from_dense(&[1.0]))
        .unwrap();
    assert!((p - 0.9).abs() < 1e-12);
    assert_eq!(label, Label::Useful);
}
