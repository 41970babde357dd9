//! Finite-difference verification of every loss gradient, composed through
//! the network: analytic backprop must match central differences of the
//! scalar loss at step 1e-5 within relative error 1e-4.

use labelnoise::loss::{self, LossKind};
use labelnoise::network::{
    backprop_per_sample, forward, init_network, Activation, Gradient, NetworkSpec, NetworkState,
};
use labelnoise::transition::TransitionMatrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FD_STEP: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;

fn loss_value(
    state: &NetworkState<f64>,
    features: &Array1<f64>,
    kind: &LossKind<f64>,
    label: usize,
) -> f64 {
    let fp = forward(state, features).unwrap();
    loss::compute(kind, &fp.logits, &fp.probs, label).unwrap().value
}

fn numeric_gradient(
    state: &NetworkState<f64>,
    features: &Array1<f64>,
    kind: &LossKind<f64>,
    label: usize,
) -> Gradient<f64> {
    let mut grad = Gradient::zeros_like(state);
    for l in 0..state.weights.len() {
        for idx in 0..state.weights[l].len() {
            let coords = (idx / state.weights[l].ncols(), idx % state.weights[l].ncols());
            let mut plus = state.clone();
            plus.weights[l][coords] += FD_STEP;
            let mut minus = state.clone();
            minus.weights[l][coords] -= FD_STEP;
            grad.weights[l][coords] = (loss_value(&plus, features, kind, label)
                - loss_value(&minus, features, kind, label))
                / (2.0 * FD_STEP);
        }
        for i in 0..state.biases[l].len() {
            let mut plus = state.clone();
            plus.biases[l][i] += FD_STEP;
            let mut minus = state.clone();
            minus.biases[l][i] -= FD_STEP;
            grad.biases[l][i] = (loss_value(&plus, features, kind, label)
                - loss_value(&minus, features, kind, label))
                / (2.0 * FD_STEP);
        }
    }
    grad
}

fn norm(g: &Gradient<f64>) -> f64 {
    let mut total = 0.0;
    for w in &g.weights {
        total += w.iter().map(|v| v * v).sum::<f64>();
    }
    for b in &g.biases {
        total += b.iter().map(|v| v * v).sum::<f64>();
    }
    total.sqrt()
}

fn diff_norm(a: &Gradient<f64>, b: &Gradient<f64>) -> f64 {
    let mut total = 0.0;
    for (x, y) in a.weights.iter().zip(&b.weights) {
        total += x.iter().zip(y.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    for (x, y) in a.biases.iter().zip(&b.biases) {
        total += x.iter().zip(y.iter()).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    }
    total.sqrt()
}

/// Column-stochastic, diagonally dominant (hence well-conditioned) matrix.
fn random_transition(rng: &mut ChaCha8Rng, labels: usize) -> TransitionMatrix<f64> {
    let mut entries = Array2::zeros((labels, labels));
    for y in 0..labels {
        let raw: Vec<f64> = (0..labels).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for yt in 0..labels {
            entries[(yt, y)] = 0.3 * raw[yt] / total + if yt == y { 0.7 } else { 0.0 };
        }
    }
    TransitionMatrix::new(entries).unwrap()
}

fn random_instance(
    rng: &mut ChaCha8Rng,
    trial: usize,
) -> (NetworkState<f64>, Array1<f64>, usize, usize) {
    let input = rng.random_range(2..5usize);
    let hidden = rng.random_range(2..6usize);
    let labels = rng.random_range(2..5usize);
    let activation = if trial % 2 == 0 {
        Activation::Tanh
    } else {
        Activation::Relu
    };
    let layer_sizes = if trial % 3 == 0 {
        vec![input, labels]
    } else {
        vec![input, hidden, labels]
    };
    let spec = NetworkSpec {
        layer_sizes,
        activation,
        seed: rng.random(),
    };
    let state = init_network(&spec).unwrap();
    let features = Array1::from_shape_fn(input, |_| rng.random_range(-1.5..1.5));
    let label = rng.random_range(0..labels);
    (state, features, label, labels)
}

fn check_loss_kind(name: &str, make: impl Fn(&mut ChaCha8Rng, usize) -> LossKind<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED ^ name.len() as u64);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let (state, features, label, labels) = random_instance(&mut rng, trial);
        let kind = make(&mut rng, labels);
        let fp = forward(&state, &features).unwrap();
        let out = loss::compute(&kind, &fp.logits, &fp.probs, label).unwrap();
        let analytic = backprop_per_sample(&state, &features, &out.dloss_dprobs).unwrap();
        let numeric = numeric_gradient(&state, &features, &kind, label);
        let rel = diff_norm(&analytic, &numeric) / norm(&numeric).max(norm(&analytic)).max(1e-10);
        worst = worst.max(rel);
        assert!(
            rel <= REL_TOL,
            "{name}: trial {trial} relative error {rel:.3e} exceeds {REL_TOL:.0e}"
        );
    }
    println!("{name}: worst relative error over 100 instances: {worst:.3e}");
}

#[test]
fn log_loss_matches_finite_differences() {
    check_loss_kind("log", |_, _| LossKind::Log);
}

#[test]
fn unhinged_loss_matches_finite_differences() {
    check_loss_kind("unhinged", |_, _| LossKind::Unhinged);
}

#[test]
fn backward_loss_matches_finite_differences() {
    check_loss_kind("backward", |rng, labels| {
        LossKind::Backward(random_transition(rng, labels))
    });
}

#[test]
fn forward_loss_matches_finite_differences() {
    check_loss_kind("forward", |rng, labels| {
        LossKind::Forward(random_transition(rng, labels))
    });
}

#[test]
fn skeptical_loss_matches_finite_differences() {
    check_loss_kind("skeptical", |rng, labels| LossKind::Skeptical {
        transition: random_transition(rng, labels),
        beta: rng.random_range(0.05..0.95),
        k: 1.0 / labels as f64,
    });
}

#[test]
fn log_loss_single_layer_reference_check() {
    // The classic case: log loss on a one-layer softmax. Kept as a direct
    // regression anchor alongside the randomized sweep above.
    let spec = NetworkSpec {
        layer_sizes: vec![3, 3],
        activation: Activation::Relu,
        seed: 123,
    };
    let state: NetworkState<f64> = init_network(&spec).unwrap();
    let features = Array1::from_vec(vec![0.3, -0.7, 1.1]);
    let fp = forward(&state, &features).unwrap();
    let out = loss::compute(&LossKind::Log, &fp.logits, &fp.probs, 2).unwrap();
    let analytic = backprop_per_sample(&state, &features, &out.dloss_dprobs).unwrap();
    let numeric = numeric_gradient(&state, &features, &LossKind::Log, 2);
    let rel = diff_norm(&analytic, &numeric) / norm(&numeric);
    assert!(rel <= 1e-4, "relative error {rel}");
    // Logit-space gradient of log loss is probs - onehot; check through the
    // bias gradient of the single layer.
    for j in 0..3 {
        let expected = fp.probs[j] - if j == 2 { 1.0 } else { 0.0 };
        assert!((analytic.biases[0][j] - expected).abs() < 1e-12);
    }
}
