//! Synthetic Gaussian-cluster datasets.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gaussian blobs, one per class, centered on the unit-simplex vertices
/// `e_c` of the feature space (which therefore needs `dim >= label_count`).
/// Every coordinate gets independent `N(0, spread^2)` jitter from a seeded
/// stream; samples are grouped by class, `per_class` each.
pub fn synth_clusters<S: Scalar>(
    label_count: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset<S>> {
    if label_count < 2 {
        return Err(Error::Config(format!(
            "label_count must be at least 2, got {label_count}"
        )));
    }
    if per_class == 0 || dim == 0 {
        return Err(Error::Config(
            "per_class and dim must be positive".into(),
        ));
    }
    if dim < label_count {
        return Err(Error::Config(format!(
            "dim {dim} too small for {label_count} simplex centers"
        )));
    }
    if spread < 0.0 {
        return Err(Error::Config(format!("spread must be non-negative, got {spread}")));
    }
    let n = label_count * per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for class in 0..label_count {
        for i in 0..per_class {
            let row = class * per_class + i;
            for j in 0..dim {
                let center = if j == class { 1.0 } else { 0.0 };
                let jitter: f64 = StandardNormal.sample(&mut rng);
                features[(row, j)] = S::from_f64(center + spread * jitter);
            }
            labels.push(class);
        }
    }
    LabeledDataset::new(features, labels, None, label_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_puts_points_on_centers() {
        let d: LabeledDataset<f64> = synth_clusters(3, 4, 5, 0.0, 9).unwrap();
        for i in 0..d.len() {
            let class = d.labels[i];
            for j in 0..5 {
                let expected = if j == class { 1.0 } else { 0.0 };
                assert_eq!(d.features[(i, j)], expected);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a: LabeledDataset<f64> = synth_clusters(3, 10, 4, 0.3, 5).unwrap();
        let b: LabeledDataset<f64> = synth_clusters(3, 10, 4, 0.3, 5).unwrap();
        assert_eq!(a, b);
        let c: LabeledDataset<f64> = synth_clusters(3, 10, 4, 0.3, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn label_histogram_is_exact() {
        let d: LabeledDataset<f64> = synth_clusters(4, 7, 4, 0.5, 0).unwrap();
        let mut histogram = vec![0usize; 4];
        for &l in &d.labels {
            histogram[l] += 1;
        }
        assert_eq!(histogram, vec![7, 7, 7, 7]);
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(synth_clusters::<f64>(1, 5, 4, 0.1, 0).is_err());
        assert!(synth_clusters::<f64>(3, 0, 4, 0.1, 0).is_err());
        assert!(synth_clusters::<f64>(5, 5, 4, 0.1, 0).is_err());
        assert!(synth_clusters::<f64>(3, 5, 4, -0.1, 0).is_err());
    }
}
