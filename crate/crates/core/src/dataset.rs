//! Labeled datasets, optionally paired with the uncorrupted labels.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A feature matrix plus a label vector.
///
/// `labels` are the labels the learner sees (possibly noisy). When the
/// dataset was produced by a noise generator, `true_labels` keeps the
/// originals so that noise rate and recovery metrics can be audited.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<S: Scalar> {
    pub features: Array2<S>,
    pub labels: Vec<usize>,
    pub true_labels: Option<Vec<usize>>,
    pub label_count: usize,
}

impl<S: Scalar> LabeledDataset<S> {
    pub fn new(
        features: Array2<S>,
        labels: Vec<usize>,
        true_labels: Option<Vec<usize>>,
        label_count: usize,
    ) -> Result<Self> {
        if label_count < 2 {
            return Err(Error::Config(format!(
                "label_count must be at least 2, got {label_count}"
            )));
        }
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(t) = &true_labels {
            if t.len() != labels.len() {
                return Err(Error::Shape(format!(
                    "{} true labels for {} samples",
                    t.len(),
                    labels.len()
                )));
            }
        }
        for (i, &y) in labels
            .iter()
            .chain(true_labels.iter().flat_map(|t| t.iter()))
            .enumerate()
        {
            if y >= label_count {
                return Err(Error::Index(format!(
                    "label {y} at position {i} out of range 0..{label_count}"
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            true_labels,
            label_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, S> {
        self.features.row(i)
    }

    /// Keep only the first `n` samples. Used to run on dataset subsets.
    pub fn truncate(mut self, n: usize) -> Self {
        if n >= self.len() {
            return self;
        }
        self.features = self.features.slice(ndarray::s![..n, ..]).to_owned();
        self.labels.truncate(n);
        if let Some(t) = &mut self.true_labels {
            t.truncate(n);
        }
        self
    }

    /// The true labels, or an audit error when they were never recorded.
    pub fn true_labels(&self) -> Result<&[usize]> {
        self.true_labels
            .as_deref()
            .ok_or_else(|| Error::Audit("dataset has no true labels".into()))
    }
}
