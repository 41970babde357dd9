//! IDX (MNIST-family) image/label file loading.
//!
//! Big-endian layout with magic 0x00000803 for image files (count, rows,
//! cols, then raw bytes) and 0x00000801 for label files. Pixels are scaled
//! to [0, 1] by division by 255, with no mean subtraction, so loading is
//! bijective.

use std::path::Path;

use ndarray::Array2;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    fn read_u32(&mut self) -> Result<u32> {
        let end = self.offset + 4;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: truncated file, needed 4 bytes at offset {}",
                self.path, self.offset
            )));
        }
        let mut buf = [0u8; 4];
        buf.copy_from_slice(&self.bytes[self.offset..end]);
        self.offset = end;
        Ok(u32::from_be_bytes(buf))
    }

    fn read_exact(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self.offset + len;
        if end > self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: truncated file, needed {} bytes at offset {}",
                self.path, len, self.offset
            )));
        }
        let slice = &self.bytes[self.offset..end];
        self.offset = end;
        Ok(slice)
    }

    fn expect_end(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes at offset {}",
                self.path,
                self.bytes.len() - self.offset,
                self.offset
            )));
        }
        Ok(())
    }
}

fn parse_images<S: Scalar>(bytes: &[u8], path: &str) -> Result<Array2<S>> {
    let mut cur = Cursor {
        bytes,
        offset: 0,
        path: path.to_string(),
    };
    let magic = cur.read_u32()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{path}: bad image magic {magic:#010x} at offset 0, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let count = cur.read_u32()? as usize;
    let rows = cur.read_u32()? as usize;
    let cols = cur.read_u32()? as usize;
    let pixels = cur.read_exact(count.checked_mul(rows * cols).ok_or_else(|| {
        Error::Format(format!("{path}: image dimensions overflow"))
    })?)?;
    cur.expect_end()?;
    let dim = rows * cols;
    let scale = 1.0 / 255.0;
    Ok(Array2::from_shape_fn((count, dim), |(i, j)| {
        S::from_f64(pixels[i * dim + j] as f64 * scale)
    }))
}

fn parse_labels(bytes: &[u8], path: &str) -> Result<Vec<usize>> {
    let mut cur = Cursor {
        bytes,
        offset: 0,
        path: path.to_string(),
    };
    let magic = cur.read_u32()?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{path}: bad label magic {magic:#010x} at offset 0, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let count = cur.read_u32()? as usize;
    let raw = cur.read_exact(count)?;
    cur.expect_end()?;
    Ok(raw.iter().map(|&b| b as usize).collect())
}

/// Load a paired image/label IDX file set.
///
/// The label count is the largest label value plus one.
pub fn load_idx<S: Scalar>(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset<S>> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;
    let features = parse_images::<S>(&image_bytes, &images_path.display().to_string())?;
    let labels = parse_labels(&label_bytes, &labels_path.display().to_string())?;
    if features.nrows() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let label_count = labels.iter().max().map_or(0, |m| m + 1).max(2);
    LabeledDataset::new(features, labels, None, label_count)
}

/// Build IDX byte blobs, used by tests and small fixtures.
pub fn encode_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
