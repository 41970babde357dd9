//! Noisy-label sidecar files.
//!
//! A sidecar decouples noise generation from training: it stores, per sample
//! index, the noisy and the true label, plus a header describing how the
//! noise was produced. The format is line-oriented ASCII CSV with
//! `#`-prefixed header lines:
//!
//! ```text
//! # labels=10
//! # kind=symmetric
//! # rate=0.4
//! # seed=17
//! index,noisy_label,true_label
//! 0,3,3
//! ...
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::noise::{noise_rate, NoiseKind, NoiseSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct SidecarHeader {
    pub label_count: usize,
    pub kind: NoiseKind,
    /// Measured noise rate of the rows, not the requested one.
    pub rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SidecarRow {
    pub index: usize,
    pub noisy_label: usize,
    pub true_label: usize,
    /// 1-based source line, kept for error reporting downstream.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SidecarFile {
    pub header: SidecarHeader,
    pub rows: Vec<SidecarRow>,
}

impl SidecarFile {
    /// Measured noise rate of the rows.
    pub fn measured_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        let flips = self
            .rows
            .iter()
            .filter(|r| r.noisy_label != r.true_label)
            .count();
        flips as f64 / self.rows.len() as f64
    }
}

/// Write a sidecar for a noise-generator output (true labels required).
pub fn write_sidecar<S: Scalar>(
    dataset: &LabeledDataset<S>,
    spec: &NoiseSpec,
    path: &Path,
) -> Result<()> {
    let truth = dataset.true_labels()?;
    let mut out = String::new();
    let _ = writeln!(out, "# labels={}", dataset.label_count);
    let _ = writeln!(out, "# kind={}", spec.kind.name());
    let _ = writeln!(out, "# rate={}", noise_rate(dataset)?);
    let _ = writeln!(out, "# seed={}", spec.seed);
    let _ = writeln!(out, "index,noisy_label,true_label");
    for (i, (&noisy, &truth)) in dataset.labels.iter().zip(truth).enumerate() {
        let _ = writeln!(out, "{i},{noisy},{truth}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn header_value<'a>(line: &'a str, key: &str, line_no: usize) -> Result<&'a str> {
    line.strip_prefix('#')
        .map(str::trim)
        .and_then(|rest| rest.strip_prefix(key))
        .and_then(|rest| rest.strip_prefix('='))
        .ok_or_else(|| {
            Error::Format(format!("line {line_no}: expected `# {key}=<value>`, got `{line}`"))
        })
}

/// Read and validate a sidecar file.
pub fn read_sidecar(path: &Path) -> Result<SidecarFile> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next_line = || {
        lines
            .next()
            .ok_or_else(|| Error::Format("sidecar file ended early".into()))
    };

    let (no, line) = next_line()?;
    let label_count: usize = header_value(line, "labels", no)?
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {no}: bad label count")))?;
    let (no, line) = next_line()?;
    let kind = NoiseKind::parse(header_value(line, "kind", no)?.trim())
        .map_err(|e| Error::Format(format!("line {no}: {e}")))?;
    let (no, line) = next_line()?;
    let rate: f64 = header_value(line, "rate", no)?
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {no}: bad rate")))?;
    let (no, line) = next_line()?;
    let seed: u64 = header_value(line, "seed", no)?
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {no}: bad seed")))?;
    let (no, line) = next_line()?;
    if line.trim() != "index,noisy_label,true_label" {
        return Err(Error::Format(format!(
            "line {no}: expected column header `index,noisy_label,true_label`"
        )));
    }

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "line {no}: expected 3 comma-separated fields, got {}",
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {no}: bad {what} `{s}`")))
        };
        let row = SidecarRow {
            index: parse(fields[0], "index")?,
            noisy_label: parse(fields[1], "noisy_label")?,
            true_label: parse(fields[2], "true_label")?,
            line: no,
        };
        if !seen.insert(row.index) {
            return Err(Error::Format(format!(
                "line {no}: duplicate index {}",
                row.index
            )));
        }
        for (what, label) in [("noisy_label", row.noisy_label), ("true_label", row.true_label)] {
            if label >= label_count {
                return Err(Error::Format(format!(
                    "line {no}: {what} {label} out of range 0..{label_count}"
                )));
            }
        }
        rows.push(row);
    }
    Ok(SidecarFile {
        header: SidecarHeader {
            label_count,
            kind,
            rate,
            seed,
        },
        rows,
    })
}

/// Overlay a sidecar onto the clean dataset it was generated from.
///
/// Every row must reference an in-bounds sample whose clean label matches the
/// recorded true label; the result carries the noisy labels plus the true
/// ones for audits.
pub fn apply_sidecar<S: Scalar>(
    clean: &LabeledDataset<S>,
    sidecar: &SidecarFile,
) -> Result<LabeledDataset<S>> {
    if sidecar.header.label_count != clean.label_count {
        return Err(Error::Audit(format!(
            "sidecar is for {} labels but dataset has {}",
            sidecar.header.label_count, clean.label_count
        )));
    }
    let mut labels = clean.labels.clone();
    for row in &sidecar.rows {
        if row.index >= clean.len() {
            return Err(Error::Format(format!(
                "line {}: index {} out of bounds for {} samples",
                row.line,
                row.index,
                clean.len()
            )));
        }
        if clean.labels[row.index] != row.true_label {
            return Err(Error::Audit(format!(
                "line {}: sidecar true label {} disagrees with dataset label {}",
                row.line, row.true_label, clean.labels[row.index]
            )));
        }
        labels[row.index] = row.noisy_label;
    }
    LabeledDataset::new(
        clean.features.clone(),
        labels,
        Some(clean.labels.clone()),
        clean.label_count,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn noisy_fixture() -> LabeledDataset<f64> {
        let features = Array2::from_shape_fn((5, 2), |(i, j)| (i * 2 + j) as f64);
        LabeledDataset::new(
            features,
            vec![0, 2, 2, 1, 1],
            Some(vec![0, 1, 2, 0, 1]),
            3,
        )
        .unwrap()
    }

    fn temp(name: &str) -> std::path::PathBuf {
        std::env::temp_dir().join(format!("labelnoise_sc_{name}_{}", std::process::id()))
    }

    #[test]
    fn round_trip_preserves_labels_and_header() {
        let ds = noisy_fixture();
        let spec = NoiseSpec {
            kind: NoiseKind::Confusing,
            rate: 0.4,
            seed: 11,
        };
        let path = temp("rt");
        write_sidecar(&ds, &spec, &path).unwrap();
        let sc = read_sidecar(&path).unwrap();
        assert_eq!(sc.header.label_count, 3);
        assert_eq!(sc.header.kind, NoiseKind::Confusing);
        assert_eq!(sc.header.seed, 11);
        assert!((sc.header.rate - sc.measured_rate()).abs() < 1e-15);
        assert!((sc.header.rate - 0.4).abs() < 1e-15);

        let clean = LabeledDataset::new(
            ds.features.clone(),
            ds.true_labels.clone().unwrap(),
            None,
            3,
        )
        .unwrap();
        let back = apply_sidecar(&clean, &sc).unwrap();
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.true_labels, ds.true_labels);
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn duplicate_index_is_rejected_with_line_number() {
        let path = temp("dup");
        std::fs::write(
            &path,
            "# labels=2\n# kind=symmetric\n# rate=0\n# seed=0\nindex,noisy_label,true_label\n0,0,0\n0,1,0\n",
        )
        .unwrap();
        match read_sidecar(&path) {
            Err(Error::Format(msg)) => assert!(msg.contains("line 7"), "{msg}"),
            other => panic!("{other:?}"),
        }
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let path = temp("range");
        std::fs::write(
            &path,
            "# labels=2\n# kind=symmetric\n# rate=0\n# seed=0\nindex,noisy_label,true_label\n0,2,0\n",
        )
        .unwrap();
        assert!(read_sidecar(&path).is_err());
        std::fs::remove_file(path).ok();
    }

    #[test]
    fn apply_rejects_out_of_bounds_and_mismatched_truth() {
        let clean = LabeledDataset::new(
            Array2::from_shape_fn((2, 1), |(i, _)| i as f64),
            vec![0, 1],
            None,
            2,
        )
        .unwrap();
        let mut sc = SidecarFile {
            header: SidecarHeader {
                label_count: 2,
                kind: NoiseKind::Symmetric,
                rate: 0.0,
                seed: 0,
            },
            rows: vec![SidecarRow {
                index: 5,
                noisy_label: 0,
                true_label: 0,
                line: 6,
            }],
        };
        assert!(matches!(apply_sidecar(&clean, &sc), Err(Error::Format(_))));
        sc.rows[0] = SidecarRow {
            index: 1,
            noisy_label: 0,
            true_label: 0,
            line: 6,
        };
        assert!(matches!(apply_sidecar(&clean, &sc), Err(Error::Audit(_))));
    }

    #[test]
    fn write_requires_true_labels() {
        let clean = LabeledDataset::new(
            Array2::from_shape_fn((2, 1), |(i, _)| i as f64),
            vec![0, 1],
            None,
            2,
        )
        .unwrap();
        let spec = NoiseSpec {
            kind: NoiseKind::Symmetric,
            rate: 0.0,
            seed: 0,
        };
        assert!(matches!(
            write_sidecar(&clean, &spec, &temp("no_truth")),
            Err(Error::Audit(_))
        ));
    }
}
