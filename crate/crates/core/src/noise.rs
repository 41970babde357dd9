//! Label-noise generators.
//!
//! Both generators flip exactly `round(rate * N)` labels, chosen uniformly
//! without replacement from a seeded stream, and always record the original
//! labels so the corruption can be audited. Symmetric noise draws the wrong
//! label uniformly from the other classes; confusing noise takes it from a
//! baseline model's top-2 predictions, which makes the corruption
//! feature-dependent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{predict, NetworkState};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Symmetric,
    Confusing,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Confusing => "confusing",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(NoiseKind::Symmetric),
            "confusing" => Ok(NoiseKind::Confusing),
            other => Err(Error::Config(format!("unknown noise kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        // Rates at or above 0.5 can flip a label's majority; out of scope.
        if !(0.0..0.5).contains(&self.rate) {
            return Err(Error::Config(format!(
                "noise rate must lie in [0, 0.5), got {}",
                self.rate
            )));
        }
        Ok(())
    }

    /// Number of labels to flip: round-half-up of `rate * n`.
    pub fn flip_count(&self, n: usize) -> usize {
        (self.rate * n as f64).round() as usize
    }
}

/// Indices to corrupt: a uniform sample without replacement, in ascending
/// order so later per-index draws consume the stream deterministically.
fn pick_flip_indices(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    let mut picked = rand::seq::index::sample(rng, n, count).into_vec();
    picked.sort_unstable();
    picked
}

/// Replace `round(rate * N)` labels with uniform draws over the wrong classes.
pub fn symmetric_noise<S: Scalar>(
    clean: &LabeledDataset<S>,
    spec: &NoiseSpec,
) -> Result<LabeledDataset<S>> {
    if spec.kind != NoiseKind::Symmetric {
        return Err(Error::Config(format!(
            "symmetric_noise called with kind {:?}",
            spec.kind
        )));
    }
    spec.validate()?;
    let n = clean.len();
    let k = clean.label_count;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let flips = pick_flip_indices(&mut rng, n, spec.flip_count(n));
    let mut labels = clean.labels.clone();
    for &i in &flips {
        let truth = clean.labels[i];
        // Uniform over the K-1 wrong labels: skip the true one.
        let draw = rand::Rng::random_range(&mut rng, 0..k - 1);
        labels[i] = if draw >= truth { draw + 1 } else { draw };
    }
    LabeledDataset::new(
        clean.features.clone(),
        labels,
        Some(clean.labels.clone()),
        k,
    )
}

/// Top-2 labels by predicted probability; ties go to the lower index.
pub fn top_two<S: Scalar>(probs: &ndarray::Array1<S>) -> (usize, usize) {
    let mut first = 0;
    for i in 1..probs.len() {
        if probs[i] > probs[first] {
            first = i;
        }
    }
    let mut second = if first == 0 { 1 } else { 0 };
    for i in 0..probs.len() {
        if i != first && probs[i] > probs[second] {
            second = i;
        }
    }
    (first, second)
}

/// Feature-dependent noise from a baseline model trained on the clean data.
///
/// Each sample's wrong label is the baseline's second prediction when the
/// top prediction equals the true label, and the top prediction otherwise;
/// a uniformly sampled subset of `round(rate * N)` samples receives it.
pub fn confusing_noise<S: Scalar>(
    clean: &LabeledDataset<S>,
    spec: &NoiseSpec,
    baseline: &NetworkState<S>,
) -> Result<LabeledDataset<S>> {
    if spec.kind != NoiseKind::Confusing {
        return Err(Error::Config(format!(
            "confusing_noise called with kind {:?}",
            spec.kind
        )));
    }
    spec.validate()?;
    if baseline.label_count() != clean.label_count {
        return Err(Error::Shape(format!(
            "baseline predicts {} labels but dataset has {}",
            baseline.label_count(),
            clean.label_count
        )));
    }
    if clean.label_count < 2 {
        return Err(Error::Config("need at least 2 labels to flip".into()));
    }
    let n = clean.len();
    let mut wrong = Vec::with_capacity(n);
    for i in 0..n {
        let probs = predict(baseline, &clean.feature_row(i).to_owned())?;
        let (y1, y2) = top_two(&probs);
        wrong.push(if y1 == clean.labels[i] { y2 } else { y1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let flips = pick_flip_indices(&mut rng, n, spec.flip_count(n));
    let mut labels = clean.labels.clone();
    for &i in &flips {
        labels[i] = wrong[i];
    }
    LabeledDataset::new(
        clean.features.clone(),
        labels,
        Some(clean.labels.clone()),
        clean.label_count,
    )
}

/// Fraction of labels differing from the recorded true labels.
pub fn noise_rate<S: Scalar>(noisy: &LabeledDataset<S>) -> Result<f64> {
    let truth = noisy.true_labels()?;
    if noisy.is_empty() {
        return Err(Error::Audit("empty dataset has no noise rate".into()));
    }
    let mismatches = noisy
        .labels
        .iter()
        .zip(truth)
        .filter(|(a, b)| a != b)
        .count();
    Ok(mismatches as f64 / noisy.len() as f64)
}
