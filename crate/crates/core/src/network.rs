//! Minimal fully connected softmax classifier.
//!
//! The network produces a per-sample predictive distribution over labels and
//! accepts externally supplied per-sample loss gradients (with respect to
//! those probabilities), so every training objective in [`crate::loss`] can
//! be wired through the same backward pass.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// Architecture description: `layer_sizes = [input dim, hidden..., label count]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "layer_sizes needs at least input and output dims, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn label_count(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    Adam,
}

/// Optimizer settings shared by SGD-with-momentum and Adam.
///
/// `lr_schedule` lists `(epoch, multiplier)` pairs; every multiplier whose
/// epoch threshold has been reached applies cumulatively on top of
/// `learning_rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig<S: Scalar> {
    pub kind: OptimizerKind,
    pub learning_rate: S,
    pub momentum: S,
    pub adam_beta1: S,
    pub adam_beta2: S,
    pub l2_scale: S,
    pub lr_schedule: Vec<(usize, S)>,
    pub batch_size: usize,
}

impl<S: Scalar> OptimizerConfig<S> {
    pub fn validate(&self) -> Result<()> {
        let one = S::one();
        let zero = S::zero();
        if self.learning_rate <= zero {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.momentum < zero || self.momentum >= one {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if b < zero || b >= one {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.l2_scale < zero {
            return Err(Error::Config("l2_scale must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let mut prev = None;
        for &(epoch, mult) in &self.lr_schedule {
            if mult <= zero {
                return Err(Error::Config("schedule multipliers must be positive".into()));
            }
            if let Some(p) = prev {
                if epoch <= p {
                    return Err(Error::Config(
                        "schedule epochs must be strictly increasing".into(),
                    ));
                }
            }
            prev = Some(epoch);
        }
        Ok(())
    }

    /// Learning rate in effect at `epoch`: the base rate times every
    /// multiplier whose threshold epoch has been reached.
    pub fn effective_lr(&self, epoch: usize) -> S {
        let mut lr = self.learning_rate;
        for &(at, mult) in &self.lr_schedule {
            if epoch >= at {
                lr = lr * mult;
            }
        }
        lr
    }
}

/// Per-layer gradient with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<S: Scalar> {
    pub weights: Vec<Array2<S>>,
    pub biases: Vec<Array1<S>>,
}

impl<S: Scalar> Gradient<S> {
    pub fn zeros_like(state: &NetworkState<S>) -> Self {
        Self {
            weights: state.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: state.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient<S>) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: S) {
        for w in &mut self.weights {
            w.mapv_inplace(|v| v * factor);
        }
        for b in &mut self.biases {
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn shape_matches(&self, state: &NetworkState<S>) -> bool {
        self.weights.len() == state.weights.len()
            && self.biases.len() == state.biases.len()
            && self
                .weights
                .iter()
                .zip(&state.weights)
                .all(|(g, w)| g.dim() == w.dim())
            && self
                .biases
                .iter()
                .zip(&state.biases)
                .all(|(g, b)| g.len() == b.len())
    }
}

/// Optimizer accumulators; shapes mirror the parameters exactly.
///
/// SGD momentum uses `first_*` as the velocity; Adam uses both moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<S: Scalar> {
    pub first_weights: Vec<Array2<S>>,
    pub first_biases: Vec<Array1<S>>,
    pub second_weights: Vec<Array2<S>>,
    pub second_biases: Vec<Array1<S>>,
}

/// Layer weights/biases plus optimizer accumulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState<S: Scalar> {
    pub weights: Vec<Array2<S>>,
    pub biases: Vec<Array1<S>>,
    pub optimizer: OptimizerState<S>,
    pub step_count: u64,
    pub activation: Activation,
}

impl<S: Scalar> NetworkState<S> {
    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn label_count(&self) -> usize {
        self.weights.last().expect("at least one layer").nrows()
    }

    pub fn parameter_count(&self) -> usize {
        let w: usize = self.weights.iter().map(|w| w.len()).sum();
        let b: usize = self.biases.iter().map(|b| b.len()).sum();
        w + b
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/// Initialize a network from a spec.
///
/// Weights are drawn layer by layer in row-major order, uniformly from
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`; biases start at zero. Draws happen
/// in `f64` from a seeded PRNG, so identical spec + seed gives bit-identical
/// states.
pub fn init_network<S: Scalar>(spec: &NetworkSpec) -> Result<NetworkState<S>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in spec.layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
            S::from_f64(rng.random_range(-scale..=scale))
        });
        weights.push(w);
        biases.push(Array1::zeros(fan_out));
    }
    let optimizer = OptimizerState {
        first_weights: weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
        first_biases: biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        second_weights: weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
        second_biases: biases.iter().map(|b| Array1::zeros(b.len())).collect(),
    };
    Ok(NetworkState {
        weights,
        biases,
        optimizer,
        step_count: 0,
        activation: spec.activation,
    })
}

/// Activations and outputs of one forward pass.
pub struct ForwardPass<S: Scalar> {
    /// Post-activation values per layer, `activations[0]` being the input.
    pub activations: Vec<Array1<S>>,
    pub logits: Array1<S>,
    pub probs: Array1<S>,
}

/// Numerically stable softmax: subtracts the max logit before exponentiation.
pub fn softmax<S: Scalar>(logits: &Array1<S>) -> Array1<S> {
    let max = logits.iter().cloned().fold(S::neg_infinity(), S::max);
    let exp = logits.mapv(|z| (z - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Full forward pass, keeping intermediate activations for backprop.
pub fn forward<S: Scalar>(state: &NetworkState<S>, features: &Array1<S>) -> Result<ForwardPass<S>> {
    if features.len() != state.input_dim() {
        return Err(Error::Shape(format!(
            "feature length {} but network input dim {}",
            features.len(),
            state.input_dim()
        )));
    }
    let layers = state.weights.len();
    let mut activations = Vec::with_capacity(layers);
    activations.push(features.clone());
    let mut current = features.clone();
    let mut logits = Array1::zeros(0);
    for l in 0..layers {
        let z = state.weights[l].dot(&current) + &state.biases[l];
        if l + 1 == layers {
            logits = z;
        } else {
            current = match state.activation {
                Activation::Relu => z.mapv(|v| v.max(S::zero())),
                Activation::Tanh => z.mapv(|v| v.tanh()),
            };
            activations.push(current.clone());
        }
    }
    let probs = softmax(&logits);
    Ok(ForwardPass {
        activations,
        logits,
        probs,
    })
}

/// Predictive distribution over labels for one sample.
pub fn predict<S: Scalar>(state: &NetworkState<S>, features: &Array1<S>) -> Result<Array1<S>> {
    forward(state, features).map(|fp| fp.probs)
}

/// Index of the largest probability; ties go to the lower label.
pub fn argmax<S: Scalar>(probs: &Array1<S>) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Backpropagate a per-sample loss gradient `dLoss/dProbs` through the
/// softmax and all hidden layers, returning a parameter-shaped gradient.
pub fn backprop_per_sample<S: Scalar>(
    state: &NetworkState<S>,
    features: &Array1<S>,
    dloss_dprobs: &Array1<S>,
) -> Result<Gradient<S>> {
    if dloss_dprobs.len() != state.label_count() {
        return Err(Error::Shape(format!(
            "loss gradient length {} but label count {}",
            dloss_dprobs.len(),
            state.label_count()
        )));
    }
    if dloss_dprobs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite loss gradient".into()));
    }
    let fp = forward(state, features)?;
    let layers = state.weights.len();

    // Softmax Jacobian: dL/dz_j = p_j * (g_j - sum_i g_i p_i).
    let inner: S = dloss_dprobs
        .iter()
        .zip(fp.probs.iter())
        .map(|(&g, &p)| g * p)
        .sum();
    let mut delta: Array1<S> = Array1::from_shape_fn(fp.probs.len(), |j| {
        fp.probs[j] * (dloss_dprobs[j] - inner)
    });

    let mut grad_w = vec![Array2::zeros((0, 0)); layers];
    let mut grad_b = vec![Array1::zeros(0); layers];
    for l in (0..layers).rev() {
        let input = &fp.activations[l];
        let mut gw = Array2::zeros(state.weights[l].dim());
        for i in 0..delta.len() {
            for j in 0..input.len() {
                gw[(i, j)] = delta[i] * input[j];
            }
        }
        grad_w[l] = gw;
        grad_b[l] = delta.clone();
        if l > 0 {
            let back = state.weights[l].t().dot(&delta);
            let act = &fp.activations[l];
            delta = match state.activation {
                Activation::Relu => Array1::from_shape_fn(back.len(), |i| {
                    if act[i] > S::zero() {
                        back[i]
                    } else {
                        S::zero()
                    }
                }),
                Activation::Tanh => Array1::from_shape_fn(back.len(), |i| {
                    back[i] * (S::one() - act[i] * act[i])
                }),
            };
        }
    }
    Ok(Gradient {
        weights: grad_w,
        biases: grad_b,
    })
}

const ADAM_EPS: f64 = 1e-8;

/// Apply one optimizer step with the mean gradient of a minibatch.
///
/// SGD momentum: `v <- momentum*v + g + l2*w; w <- w - lr(epoch)*v`.
/// Adam: bias-corrected moments with the configured betas; the L2 term is
/// added to the gradient before accumulation.
pub fn apply_update<S: Scalar>(
    state: &mut NetworkState<S>,
    mean_gradient: &Gradient<S>,
    config: &OptimizerConfig<S>,
    epoch: usize,
) -> Result<()> {
    config.validate()?;
    if !mean_gradient.shape_matches(state) {
        return Err(Error::Shape("gradient shapes do not match parameters".into()));
    }
    let lr = config.effective_lr(epoch);
    let l2 = config.l2_scale;
    match config.kind {
        OptimizerKind::SgdMomentum => {
            let mu = config.momentum;
            for l in 0..state.weights.len() {
                for (w, (g, v)) in state.weights[l].iter_mut().zip(
                    mean_gradient.weights[l]
                        .iter()
                        .zip(state.optimizer.first_weights[l].iter_mut()),
                ) {
                    *v = mu * *v + *g + l2 * *w;
                    *w = *w - lr * *v;
                }
                for (b, (g, v)) in state.biases[l].iter_mut().zip(
                    mean_gradient.biases[l]
                        .iter()
                        .zip(state.optimizer.first_biases[l].iter_mut()),
                ) {
                    *v = mu * *v + *g + l2 * *b;
                    *b = *b - lr * *v;
                }
            }
        }
        OptimizerKind::Adam => {
            let (b1, b2) = (config.adam_beta1, config.adam_beta2);
            let t = state.step_count + 1;
            let corr1 = S::one() - b1.powi(t as i32);
            let corr2 = S::one() - b2.powi(t as i32);
            let eps = S::from_f64(ADAM_EPS);
            let update =
                |p: &mut S, g: S, m: &mut S, v: &mut S| {
                    let g = g + l2 * *p;
                    *m = b1 * *m + (S::one() - b1) * g;
                    *v = b2 * *v + (S::one() - b2) * g * g;
                    let m_hat = *m / corr1;
                    let v_hat = *v / corr2;
                    *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                };
            for l in 0..state.weights.len() {
                for ((w, &g), (m, v)) in state.weights[l]
                    .iter_mut()
                    .zip(mean_gradient.weights[l].iter())
                    .zip(
                        state.optimizer.first_weights[l]
                            .iter_mut()
                            .zip(state.optimizer.second_weights[l].iter_mut()),
                    )
                {
                    update(w, g, m, v);
                }
                for ((b, &g), (m, v)) in state.biases[l]
                    .iter_mut()
                    .zip(mean_gradient.biases[l].iter())
                    .zip(
                        state.optimizer.first_biases[l]
                            .iter_mut()
                            .zip(state.optimizer.second_biases[l].iter_mut()),
                    )
                {
                    update(b, g, m, v);
                }
            }
        }
    }
    state.step_count += 1;
    if !state.is_finite() {
        return Err(Error::Numeric(
            "parameters became non-finite after update".into(),
        ));
    }
    Ok(())
}

/// Mean of per-sample gradients, accumulated in ascending sample order.
pub fn mean_gradient<S: Scalar>(
    state: &NetworkState<S>,
    per_sample: &[Gradient<S>],
) -> Gradient<S> {
    let mut total = Gradient::zeros_like(state);
    for g in per_sample {
        total.add_assign(g);
    }
    if !per_sample.is_empty() {
        total.scale(S::from_f64(1.0 / per_sample.len() as f64));
    }
    total
}
