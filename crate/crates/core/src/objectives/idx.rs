//! IDX (MNIST) binary reader. All header integers are big-endian u32.

use std::path::Path;

use super::Dataset;
use crate::error::{Result, ZoError};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| ZoError::Format(format!("{what}: truncated header")))
}

/// Parses an images file. Returns `(count, rows, cols, pixels)`.
pub fn read_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(ZoError::Format(format!(
            "images magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let len = count * rows * cols;
    let pixels = bytes
        .get(16..16 + len)
        .ok_or_else(|| ZoError::Format(format!("images: truncated, expected {len} pixel bytes")))?;
    Ok((count, rows, cols, pixels))
}

/// Parses a labels file.
pub fn read_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(ZoError::Format(format!(
            "labels magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    bytes
        .get(8..8 + count)
        .ok_or_else(|| ZoError::Format(format!("labels: truncated, expected {count} bytes")))
}

/// Loads an image/label IDX pair, keeping at most `max_samples` items.
/// Pixels are scaled to [0, 1]; the class count is fixed at 10.
pub fn load_idx(path_images: &Path, path_labels: &Path, max_samples: Option<usize>) -> Result<Dataset> {
    let img = std::fs::read(path_images).map_err(|e| ZoError::io(path_images, e))?;
    let lab = std::fs::read(path_labels).map_err(|e| ZoError::io(path_labels, e))?;
    parse_idx_pair(&img, &lab, max_samples)
}

pub(crate) fn parse_idx_pair(img: &[u8], lab: &[u8], max_samples: Option<usize>) -> Result<Dataset> {
    let (count, rows, cols, pixels) = read_idx_images(img)?;
    let labels = read_idx_labels(lab)?;
    if labels.len() != count {
        return Err(ZoError::Format(format!(
            "image count {count} does not match label count {}",
            labels.len()
        )));
    }
    let keep = max_samples.map_or(count, |m| m.min(count));
    let dim = rows * cols;
    let features = pixels[..keep * dim].iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels = labels[..keep].iter().map(|&l| usize::from(l)).collect();
    Dataset::new(features, labels, dim, 10)
}

/// Encodes a dataset as an IDX pair (pixels rounded to bytes).
pub fn encode_idx(ds: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.dim {
        return Err(ZoError::Format("rows×cols must equal the feature dimension".into()));
    }
    let mut img = Vec::with_capacity(16 + ds.features.len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for v in [ds.n, rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend(ds.features.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    let mut lab = Vec::with_capacity(8 + ds.n);
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.n as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    Ok((img, lab))
}
