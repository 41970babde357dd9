//! Accuracy, label-recovery metrics, and per-run records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of positions where the two label vectors agree.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Shape("empty label vectors".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Recovery precision and recall of predictions against a noisy/true pair.
///
/// - precision: among samples where the prediction disagrees with the noisy
///   label, the fraction where it matches the true label;
/// - recall: among samples where noise actually occurred, the fraction where
///   the prediction matches the true label.
///
/// A zero denominator yields `None` rather than 0, so undefined cases never
/// contaminate aggregates.
pub fn recovery_metrics(
    predicted: &[usize],
    noisy: &[usize],
    true_labels: &[usize],
) -> Result<(Option<f64>, Option<f64>)> {
    if predicted.len() != noisy.len() || noisy.len() != true_labels.len() {
        return Err(Error::Shape(format!(
            "label vectors of lengths {}, {}, {}",
            predicted.len(),
            noisy.len(),
            true_labels.len()
        )));
    }
    let mut disagree = 0usize;
    let mut disagree_correct = 0usize;
    let mut noisy_count = 0usize;
    let mut noisy_recovered = 0usize;
    for ((&p, &n), &t) in predicted.iter().zip(noisy).zip(true_labels) {
        if p != n {
            disagree += 1;
            if p == t {
                disagree_correct += 1;
            }
        }
        if t != n {
            noisy_count += 1;
            if p == t {
                noisy_recovered += 1;
            }
        }
    }
    let precision = (disagree > 0).then(|| disagree_correct as f64 / disagree as f64);
    let recall = (noisy_count > 0).then(|| noisy_recovered as f64 / noisy_count as f64);
    Ok((precision, recall))
}

/// Mean after dropping one maximum and one minimum; needs at least 3 values.
pub fn partial_mean(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::Config(format!(
            "partial mean needs at least 3 values, got {}",
            values.len()
        )));
    }
    let mut max_idx = 0;
    let mut min_idx = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[max_idx] {
            max_idx = i;
        }
        if v < values[min_idx] {
            min_idx = i;
        }
    }
    if max_idx == min_idx {
        // All values equal; drop any two.
        min_idx = 1;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if i != max_idx && i != min_idx {
            sum += v;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Per-run metrics emitted as the result JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub loss: String,
    pub seed: u64,
    pub epochs: usize,
    pub test_error: f64,
    pub train_error_vs_true: f64,
    pub noise_rate: f64,
    pub recovery_precision: Option<f64>,
    pub recovery_recall: Option<f64>,
    /// `(epoch, accuracy vs noisy labels, accuracy vs true labels)`.
    pub per_epoch: Vec<(usize, f64, f64)>,
}

impl ExperimentRecord {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        let mut rates = vec![self.test_error, self.train_error_vs_true, self.noise_rate];
        rates.extend(self.recovery_precision);
        rates.extend(self.recovery_recall);
        for v in rates {
            if !in_unit(v) {
                return Err(Error::Audit(format!("rate {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}
