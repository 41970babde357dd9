//! Transition matrices and their online estimation.
//!
//! A [`TransitionMatrix`] stores `T[noisy, true] ~ p(noisy label | true label)`
//! as a column-stochastic table. During training the estimate starts at the
//! identity (the noisy dataset is trusted initially) and each column is pulled
//! toward the observed noisy label whenever the model makes a confident
//! prediction.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::network::argmax;
use crate::scalar::Scalar;

/// Column-sum tolerance: 1e-9 in f64; relaxed for narrower scalars where
/// summation error alone exceeds that.
fn column_tolerance<S: Scalar>(n: usize) -> S {
    let eps_bound = S::epsilon() * S::from_f64(8.0 * n as f64);
    S::from_f64(1e-9).max(eps_bound)
}

/// `|Y| x |Y|` column-stochastic table, indexed `[noisy, true]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<S: Scalar> {
    entries: Array2<S>,
    label_count: usize,
}

/// Settings for the confidence-gated online update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig<S: Scalar> {
    /// Retention factor of the previous column; close to 1 is safer, and
    /// exactly 1 freezes the estimate.
    pub gamma: S,
    /// Confidence margin: an update fires only when max prob > 1 - epsilon.
    pub epsilon: S,
}

impl<S: Scalar> EstimatorConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.gamma <= S::zero() || self.gamma > S::one() {
            return Err(Error::Config(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.epsilon <= S::zero() || self.epsilon >= S::one() {
            return Err(Error::Config(format!(
                "epsilon must lie strictly inside (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

impl<S: Scalar> TransitionMatrix<S> {
    /// Validate and wrap a column-stochastic matrix.
    pub fn new(entries: Array2<S>) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows != cols || rows < 2 {
            return Err(Error::Config(format!(
                "transition matrix must be square with at least 2 labels, got {rows}x{cols}"
            )));
        }
        let tol = column_tolerance::<S>(rows);
        for y in 0..cols {
            let mut sum = S::zero();
            for yt in 0..rows {
                let v = entries[(yt, y)];
                if !(S::zero()..=S::one()).contains(&v) {
                    return Err(Error::Config(format!(
                        "entry [{yt},{y}] = {v} outside [0, 1]"
                    )));
                }
                sum = sum + v;
            }
            if (sum - S::one()).abs() > tol {
                return Err(Error::Config(format!(
                    "column {y} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self {
            entries,
            label_count: rows,
        })
    }

    /// Identity matrix: the noisy labels are trusted as-is.
    pub fn identity(label_count: usize) -> Result<Self> {
        if label_count < 2 {
            return Err(Error::Config(format!(
                "label_count must be at least 2, got {label_count}"
            )));
        }
        Ok(Self {
            entries: Array2::from_shape_fn((label_count, label_count), |(i, j)| {
                if i == j {
                    S::one()
                } else {
                    S::zero()
                }
            }),
            label_count,
        })
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn entries(&self) -> &Array2<S> {
        &self.entries
    }

    /// `p(noisy | true)` entry.
    pub fn prob(&self, noisy: usize, truth: usize) -> S {
        self.entries[(noisy, truth)]
    }

    /// Row for a fixed noisy label: mixing weights over true labels.
    pub fn row(&self, noisy: usize) -> ndarray::ArrayView1<'_, S> {
        self.entries.row(noisy)
    }

    pub fn is_column_stochastic(&self, tol: S) -> bool {
        (0..self.label_count).all(|y| {
            let sum: S = (0..self.label_count).map(|yt| self.entries[(yt, y)]).sum();
            (sum - S::one()).abs() <= tol
                && (0..self.label_count)
                    .all(|yt| (S::zero()..=S::one()).contains(&self.entries[(yt, y)]))
        })
    }

    /// Confidence-gated online update.
    ///
    /// Let `y* = argmax probs`. When `probs[y*] > 1 - epsilon`, column `y*`
    /// becomes `gamma * column + (1 - gamma) * e_{noisy_label}` and `true` is
    /// returned. The update fires whether or not `y*` agrees with the noisy
    /// label; otherwise nothing changes.
    pub fn maybe_update(
        &mut self,
        probs: &Array1<S>,
        noisy_label: usize,
        config: &EstimatorConfig<S>,
    ) -> Result<bool> {
        config.validate()?;
        if probs.len() != self.label_count {
            return Err(Error::Shape(format!(
                "probability vector of length {} for {} labels",
                probs.len(),
                self.label_count
            )));
        }
        if noisy_label >= self.label_count {
            return Err(Error::Index(format!(
                "noisy label {noisy_label} out of range 0..{}",
                self.label_count
            )));
        }
        let y_star = argmax(probs);
        if probs[y_star] <= S::one() - config.epsilon {
            return Ok(false);
        }
        let gamma = config.gamma;
        for yt in 0..self.label_count {
            let indicator = if yt == noisy_label { S::one() } else { S::zero() };
            let v = gamma * self.entries[(yt, y_star)] + (S::one() - gamma) * indicator;
            self.entries[(yt, y_star)] = v.max(S::zero()).min(S::one());
        }
        debug_assert!(self.is_column_stochastic(column_tolerance::<S>(self.label_count)));
        Ok(true)
    }

    /// Count-based transition estimate from paired label vectors:
    /// `T[noisy, true] = count(noisy & true) / count(true)`. True labels with
    /// zero count fall back to the identity column.
    pub fn empirical(
        clean_labels: &[usize],
        noisy_labels: &[usize],
        label_count: usize,
    ) -> Result<Self> {
        if clean_labels.len() != noisy_labels.len() {
            return Err(Error::Shape(format!(
                "{} clean labels but {} noisy labels",
                clean_labels.len(),
                noisy_labels.len()
            )));
        }
        if label_count < 2 {
            return Err(Error::Config(format!(
                "label_count must be at least 2, got {label_count}"
            )));
        }
        let mut counts = vec![vec![0u64; label_count]; label_count];
        let mut totals = vec![0u64; label_count];
        for (&y, &yt) in clean_labels.iter().zip(noisy_labels) {
            if y >= label_count || yt >= label_count {
                return Err(Error::Index(format!(
                    "label pair ({yt}, {y}) out of range 0..{label_count}"
                )));
            }
            counts[yt][y] += 1;
            totals[y] += 1;
        }
        let entries = Array2::from_shape_fn((label_count, label_count), |(yt, y)| {
            if totals[y] == 0 {
                if yt == y {
                    S::one()
                } else {
                    S::zero()
                }
            } else {
                S::from_f64(counts[yt][y] as f64 / totals[y] as f64)
            }
        });
        Self::new(entries)
    }

    /// Inverse, rejecting singular or badly conditioned matrices.
    ///
    /// The 1-norm condition estimate `||T||_1 * ||T^-1||_1` must stay at or
    /// below 1e8.
    pub fn inverse(&self) -> Result<Array2<S>> {
        let n = self.label_count;
        let inv = invert(&self.entries).ok_or_else(|| {
            Error::Correction("transition matrix is singular".into())
        })?;
        let cond = (one_norm(&self.entries) * one_norm(&inv)).to_f64();
        if !cond.is_finite() || cond > 1e8 {
            return Err(Error::Correction(format!(
                "transition matrix is ill-conditioned: condition number {cond:.3e} exceeds 1e8 ({n}x{n})"
            )));
        }
        Ok(inv)
    }

    /// Plain-text serialization: `labels=<n>` header, then one row per noisy
    /// label, space-separated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "labels={}", self.label_count);
        for yt in 0..self.label_count {
            let row: Vec<String> = (0..self.label_count)
                .map(|y| format!("{}", self.entries[(yt, y)]))
                .collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("empty transition file".into()))?;
        let n: usize = header
            .strip_prefix("labels=")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| {
                Error::Format(format!("line 1: expected `labels=<n>`, got `{header}`"))
            })?;
        let mut entries = Array2::zeros((n, n));
        let mut rows_read = 0;
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            if rows_read >= n {
                return Err(Error::Format(format!(
                    "line {}: more than {n} matrix rows",
                    idx + 1
                )));
            }
            let values: Vec<&str> = line.split_whitespace().collect();
            if values.len() != n {
                return Err(Error::Format(format!(
                    "line {}: expected {n} entries, got {}",
                    idx + 1,
                    values.len()
                )));
            }
            for (y, v) in values.iter().enumerate() {
                let parsed: f64 = v.parse().map_err(|_| {
                    Error::Format(format!("line {}: bad number `{v}`", idx + 1))
                })?;
                entries[(rows_read, y)] = S::from_f64(parsed);
            }
            rows_read += 1;
        }
        if rows_read != n {
            return Err(Error::Format(format!(
                "expected {n} matrix rows, found {rows_read}"
            )));
        }
        Self::new(entries)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

fn one_norm<S: Scalar>(m: &Array2<S>) -> S {
    let mut best = S::zero();
    for col in m.columns() {
        let sum: S = col.iter().map(|v| v.abs()).sum();
        best = best.max(sum);
    }
    best
}

/// Gauss-Jordan elimination with partial pivoting; `None` when singular.
fn invert<S: Scalar>(m: &Array2<S>) -> Option<Array2<S>> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = Array2::from_shape_fn((n, n), |(i, j)| if i == j { S::one() } else { S::zero() });
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[(row, col)].abs() > a[(pivot, col)].abs() {
                pivot = row;
            }
        }
        let pivot_value = a[(pivot, col)];
        if pivot_value.abs() < S::from_f64(1e-300) {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap((col, j), (pivot, j));
                inv.swap((col, j), (pivot, j));
            }
        }
        let scale = S::one() / a[(col, col)];
        for j in 0..n {
            a[(col, j)] = a[(col, j)] * scale;
            inv[(col, j)] = inv[(col, j)] * scale;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[(row, col)];
            if factor == S::zero() {
                continue;
            }
            for j in 0..n {
                a[(row, j)] = a[(row, j)] - factor * a[(col, j)];
                inv[(row, j)] = inv[(row, j)] - factor * inv[(col, j)];
            }
        }
    }
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    fn config(gamma: f64, epsilon: f64) -> EstimatorConfig<f64> {
        EstimatorConfig { gamma, epsilon }
    }

    #[test]
    fn identity_is_column_stochastic() {
        let t = TransitionMatrix::<f64>::identity(3).unwrap();
        assert!(t.is_column_stochastic(1e-12));
        for y in 0..3 {
            for yt in 0..3 {
                assert_eq!(t.prob(yt, y), if yt == y { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn identity_rejects_single_label() {
        assert!(TransitionMatrix::<f64>::identity(1).is_err());
    }

    #[test]
    fn no_update_below_confidence_threshold() {
        let mut t = TransitionMatrix::<f64>::identity(3).unwrap();
        let fired = t
            .maybe_update(&arr1(&[0.85, 0.10, 0.05]), 1, &config(0.9, 0.1))
            .unwrap();
        assert!(!fired); // 0.85 <= 0.9
        assert_eq!(t, TransitionMatrix::identity(3).unwrap());
    }

    #[test]
    fn agreeing_confident_update_is_fixed_point() {
        let mut t = TransitionMatrix::<f64>::identity(3).unwrap();
        let fired = t
            .maybe_update(&arr1(&[0.01, 0.01, 0.98]), 2, &config(0.5, 0.1))
            .unwrap();
        assert!(fired);
        assert_eq!(t, TransitionMatrix::identity(3).unwrap());
    }

    #[test]
    fn disagreeing_confident_update_mixes_column() {
        let mut t = TransitionMatrix::<f64>::identity(3).unwrap();
        let fired = t
            .maybe_update(&arr1(&[0.01, 0.01, 0.98]), 0, &config(0.9, 0.1))
            .unwrap();
        assert!(fired);
        let col: Vec<f64> = (0..3).map(|yt| t.prob(yt, 2)).collect();
        assert!((col[0] - 0.1).abs() < 1e-15);
        assert!(col[1].abs() < 1e-15);
        assert!((col[2] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn gamma_one_freezes_the_estimate() {
        let mut t = TransitionMatrix::<f64>::identity(2).unwrap();
        let fired = t
            .maybe_update(&arr1(&[0.99, 0.01]), 1, &config(1.0, 0.1))
            .unwrap();
        assert!(fired);
        assert_eq!(t, TransitionMatrix::identity(2).unwrap());
        assert!(t
            .maybe_update(&arr1(&[0.99, 0.01]), 0, &config(1.1, 0.1))
            .is_err());
    }

    #[test]
    fn empirical_identity_when_no_flips() {
        let labels = vec![0, 1, 2, 1, 0];
        let t = TransitionMatrix::<f64>::empirical(&labels, &labels, 3).unwrap();
        assert_eq!(t, TransitionMatrix::identity(3).unwrap());
    }

    #[test]
    fn empirical_hand_count() {
        let clean = vec![0, 0, 0, 0, 1];
        let noisy = vec![0, 0, 1, 1, 1];
        let t = TransitionMatrix::<f64>::empirical(&clean, &noisy, 2).unwrap();
        assert!((t.prob(0, 0) - 0.5).abs() < 1e-15);
        assert!((t.prob(1, 0) - 0.5).abs() < 1e-15);
        assert!(t.prob(0, 1).abs() < 1e-15);
        assert!((t.prob(1, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_zero_count_column_falls_back_to_identity() {
        let clean = vec![0, 0];
        let noisy = vec![0, 1];
        let t = TransitionMatrix::<f64>::empirical(&clean, &noisy, 3).unwrap();
        assert!(t.is_column_stochastic(1e-12));
        assert_eq!(t.prob(1, 1), 1.0);
        assert_eq!(t.prob(2, 2), 1.0);
    }

    #[test]
    fn inverse_of_identity() {
        let t = TransitionMatrix::<f64>::identity(4).unwrap();
        let inv = t.inverse().unwrap();
        assert_eq!(inv, t.entries().clone());
    }

    #[test]
    fn inverse_rejects_duplicate_columns() {
        let t = TransitionMatrix::<f64>::new(arr2(&[[0.6, 0.6], [0.4, 0.4]])).unwrap();
        let err = t.inverse().unwrap_err();
        assert!(matches!(err, Error::Correction(_)));
    }

    #[test]
    fn inverse_reports_condition_number() {
        // Nearly-singular but not exactly: condition number ~1e10.
        let e = 1e-10;
        let t = TransitionMatrix::<f64>::new(arr2(&[
            [0.5 + e, 0.5 - e],
            [0.5 - e, 0.5 + e],
        ]))
        .unwrap();
        match t.inverse() {
            Err(Error::Correction(msg)) => assert!(msg.contains("condition number")),
            other => panic!("expected correction error, got {other:?}"),
        }
    }

    #[test]
    fn text_round_trip() {
        let t = TransitionMatrix::<f64>::new(arr2(&[
            [0.8, 0.25, 0.0],
            [0.1, 0.5, 0.125],
            [0.1, 0.25, 0.875],
        ]))
        .unwrap();
        let back = TransitionMatrix::<f64>::from_text(&t.to_text()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn text_rejects_bad_header_and_shape() {
        assert!(TransitionMatrix::<f64>::from_text("rows=2\n1 0\n0 1\n").is_err());
        assert!(TransitionMatrix::<f64>::from_text("labels=2\n1 0 0\n0 1 0\n").is_err());
        assert!(TransitionMatrix::<f64>::from_text("labels=2\n1 0\n").is_err());
    }

    #[test]
    fn rejects_non_stochastic_columns() {
        let err = TransitionMatrix::<f64>::new(arr2(&[[0.9, 0.0], [0.2, 1.0]])).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
