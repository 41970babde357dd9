//! End-to-end training loop.
//!
//! One epoch shuffles the sample indices with a per-epoch seeded
//! permutation, walks the batches (each batch internally in ascending index
//! order so reductions are reproducible), takes an optimizer step per batch,
//! and — for the skeptical loss with online estimation — runs the
//! confidence-gated transition updates on the batch just consumed, after
//! the step, using the refreshed predictions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss::{self, LossKind};
use crate::metrics::{accuracy, recovery_metrics, ExperimentRecord};
use crate::network::{
    apply_update, argmax, backprop_per_sample, forward, init_network, mean_gradient, predict,
    NetworkSpec, NetworkState, OptimizerConfig,
};
use crate::noise::noise_rate;
use crate::scalar::Scalar;
use crate::transition::{EstimatorConfig, TransitionMatrix};

/// Everything a single run needs besides the data.
#[derive(Debug, Clone)]
pub struct TrainSettings<S: Scalar> {
    pub network: NetworkSpec,
    pub optimizer: OptimizerConfig<S>,
    pub loss: LossKind<S>,
    pub estimator: EstimatorConfig<S>,
    /// Run the online transition updates (skeptical loss only).
    pub estimate_transition: bool,
    /// Epochs to wait before the first transition update.
    pub warmup_epochs: usize,
    pub epochs: usize,
    /// Seed of the per-epoch shuffle stream.
    pub shuffle_seed: u64,
}

/// Final model, run record, and — when the loss carries one — the
/// transition matrix in effect at the end.
#[derive(Debug, Clone)]
pub struct TrainOutcome<S: Scalar> {
    pub state: NetworkState<S>,
    pub record: ExperimentRecord,
    pub transition: Option<TransitionMatrix<S>>,
}

fn predictions<S: Scalar>(
    state: &NetworkState<S>,
    data: &LabeledDataset<S>,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let probs = predict(state, &data.feature_row(i).to_owned())?;
        out.push(argmax(&probs));
    }
    Ok(out)
}

/// Train on `train_set` (noisy labels in `labels`, originals in
/// `true_labels` when available) and evaluate on `test_set`.
pub fn train<S: Scalar>(
    train_set: &LabeledDataset<S>,
    test_set: &LabeledDataset<S>,
    settings: &TrainSettings<S>,
) -> Result<TrainOutcome<S>> {
    settings.network.validate()?;
    settings.optimizer.validate()?;
    settings.loss.validate()?;
    settings.estimator.validate()?;
    if settings.network.input_dim() != train_set.dim() {
        return Err(Error::Shape(format!(
            "network input dim {} but dataset dim {}",
            settings.network.input_dim(),
            train_set.dim()
        )));
    }
    if settings.network.label_count() != train_set.label_count {
        return Err(Error::Shape(format!(
            "network output dim {} but dataset has {} labels",
            settings.network.label_count(),
            train_set.label_count
        )));
    }
    if let Some(t) = settings.loss.transition() {
        if t.label_count() != train_set.label_count {
            return Err(Error::Shape(format!(
                "transition matrix over {} labels but dataset has {}",
                t.label_count(),
                train_set.label_count
            )));
        }
    }
    if test_set.dim() != train_set.dim() || test_set.label_count != train_set.label_count {
        return Err(Error::Shape("test set shape differs from train set".into()));
    }

    let mut state = init_network::<S>(&settings.network)?;
    let online = matches!(settings.loss, LossKind::Skeptical { .. }) && settings.estimate_transition;
    let mut estimated = match &settings.loss {
        LossKind::Skeptical { transition, .. } => Some(transition.clone()),
        _ => None,
    };

    let n = train_set.len();
    let mut indices: Vec<usize> = (0..n).collect();
    let mut per_epoch = Vec::with_capacity(settings.epochs);

    for epoch in 0..settings.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(
            settings
                .shuffle_seed
                .wrapping_add((epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        );
        indices.shuffle(&mut rng);

        for batch in indices.chunks(settings.optimizer.batch_size) {
            let mut batch: Vec<usize> = batch.to_vec();
            batch.sort_unstable();

            // The loss for a minibatch sees the transition estimate as of the
            // batch start.
            let batch_loss = match (&settings.loss, &estimated) {
                (LossKind::Skeptical { beta, k, .. }, Some(t)) => LossKind::Skeptical {
                    transition: t.clone(),
                    beta: *beta,
                    k: *k,
                },
                (other, _) => other.clone(),
            };

            let mut grads = Vec::with_capacity(batch.len());
            for &i in &batch {
                let fp = forward(&state, &train_set.feature_row(i).to_owned())?;
                let out = loss::compute(&batch_loss, &fp.logits, &fp.probs, train_set.labels[i])?;
                if !out.value.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite loss at epoch {epoch}, sample {i}"
                    )));
                }
                grads.push(backprop_per_sample(
                    &state,
                    &train_set.feature_row(i).to_owned(),
                    &out.dloss_dprobs,
                )?);
            }
            let mean = mean_gradient(&state, &grads);
            apply_update(&mut state, &mean, &settings.optimizer, epoch)?;

            if online && epoch >= settings.warmup_epochs {
                let t_hat = estimated.as_mut().expect("skeptical loss keeps an estimate");
                for &i in &batch {
                    let probs = predict(&state, &train_set.feature_row(i).to_owned())?;
                    t_hat.maybe_update(&probs, train_set.labels[i], &settings.estimator)?;
                }
            }
        }

        let train_pred = predictions(&state, train_set)?;
        let noisy_fit = accuracy(&train_pred, &train_set.labels)?;
        let true_acc = match &train_set.true_labels {
            Some(t) => accuracy(&train_pred, t)?,
            None => noisy_fit,
        };
        per_epoch.push((epoch, noisy_fit, true_acc));
    }

    let record = evaluate_into_record(
        &state,
        train_set,
        test_set,
        settings.loss.name(),
        settings.shuffle_seed,
        settings.epochs,
        per_epoch,
    )?;
    Ok(TrainOutcome {
        state,
        record,
        transition: estimated,
    })
}

/// Compute the final metrics of a trained model.
pub fn evaluate_into_record<S: Scalar>(
    state: &NetworkState<S>,
    train_set: &LabeledDataset<S>,
    test_set: &LabeledDataset<S>,
    loss_name: &str,
    seed: u64,
    epochs: usize,
    per_epoch: Vec<(usize, f64, f64)>,
) -> Result<ExperimentRecord> {
    let test_pred = predictions(state, test_set)?;
    let test_truth = test_set.true_labels.as_ref().unwrap_or(&test_set.labels);
    let test_error = 1.0 - accuracy(&test_pred, test_truth)?;

    let train_pred = predictions(state, train_set)?;
    let (train_error_vs_true, rate, precision, recall) = match &train_set.true_labels {
        Some(truth) => {
            let err = 1.0 - accuracy(&train_pred, truth)?;
            let rate = noise_rate(train_set)?;
            let (p, r) = recovery_metrics(&train_pred, &train_set.labels, truth)?;
            (err, rate, p, r)
        }
        None => {
            let err = 1.0 - accuracy(&train_pred, &train_set.labels)?;
            (err, 0.0, None, None)
        }
    };

    let record = ExperimentRecord {
        loss: loss_name.to_string(),
        seed,
        epochs,
        test_error,
        train_error_vs_true,
        noise_rate: rate,
        recovery_precision: precision,
        recovery_recall: recall,
        per_epoch,
    };
    record.validate()?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::synth::synth_clusters;
    use crate::network::{Activation, OptimizerKind};

    fn settings(loss: LossKind<f64>, dim: usize, labels: usize, seed: u64) -> TrainSettings<f64> {
        TrainSettings {
            network: NetworkSpec {
                layer_sizes: vec![dim, 16, labels],
                activation: Activation::Relu,
                seed,
            },
            optimizer: OptimizerConfig {
                kind: OptimizerKind::SgdMomentum,
                learning_rate: 0.1,
                momentum: 0.9,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                l2_scale: 1e-4,
                lr_schedule: vec![(12, 0.2), (16, 0.2)],
                batch_size: 32,
            },
            loss,
            estimator: EstimatorConfig {
                gamma: 0.9999,
                epsilon: 0.1,
            },
            estimate_transition: true,
            warmup_epochs: 0,
            epochs: 20,
            shuffle_seed: seed,
        }
    }

    #[test]
    fn log_loss_solves_separable_clusters() {
        let train_set = synth_clusters::<f64>(3, 60, 3, 0.05, 1).unwrap();
        let test_set = synth_clusters::<f64>(3, 20, 3, 0.05, 2).unwrap();
        let out = train(&train_set, &test_set, &settings(LossKind::Log, 3, 3, 7)).unwrap();
        assert!(
            out.record.test_error < 0.05,
            "test error {} too high",
            out.record.test_error
        );
        assert_eq!(out.record.per_epoch.len(), 20);
        assert!(out.transition.is_none());
    }

    #[test]
    fn training_is_deterministic() {
        let train_set = synth_clusters::<f64>(3, 30, 3, 0.2, 1).unwrap();
        let test_set = synth_clusters::<f64>(3, 10, 3, 0.2, 2).unwrap();
        let s = settings(LossKind::Log, 3, 3, 5);
        let a = train(&train_set, &test_set, &s).unwrap();
        let b = train(&train_set, &test_set, &s).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.record, b.record);
    }

    #[test]
    fn frozen_estimator_keeps_identity() {
        let train_set = synth_clusters::<f64>(3, 30, 3, 0.1, 3).unwrap();
        let test_set = synth_clusters::<f64>(3, 10, 3, 0.1, 4).unwrap();
        let identity = TransitionMatrix::identity(3).unwrap();
        let mut s = settings(
            LossKind::Skeptical {
                transition: identity.clone(),
                beta: 0.2,
                k: 1.0 / 3.0,
            },
            3,
            3,
            9,
        );
        s.estimate_transition = false;
        s.epochs = 5;
        let out = train(&train_set, &test_set, &s).unwrap();
        assert_eq!(out.transition.unwrap(), identity);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let train_set = synth_clusters::<f64>(3, 10, 3, 0.1, 3).unwrap();
        let test_set = synth_clusters::<f64>(3, 5, 3, 0.1, 4).unwrap();
        let s = settings(LossKind::Log, 4, 3, 1);
        assert!(matches!(
            train(&train_set, &test_set, &s),
            Err(Error::Shape(_))
        ));
    }
}
