//! IDX binary dataset loader (the MNIST container format).
//!
//! Header: two zero bytes, a dtype byte (0x08 = unsigned byte), a rank byte,
//! then rank big-endian u32 dimension sizes, then the raw data. Pixels are
//! normalized to [0, 1].

use crate::error::{BqError, Result};
use std::path::Path;

/// A loaded image/label pair set: `count` items of `dimension` features
/// each, values in [0, 1], one small-integer label per item.
#[derive(Debug, Clone)]
pub struct IdxDataset {
    pub features: Vec<f64>, // count * dimension, row-major
    pub labels: Vec<u8>,
    pub dimension: usize,
    pub count: usize,
}

fn parse_idx(bytes: &[u8], what: &str) -> Result<(Vec<usize>, Vec<u8>)> {
    if bytes.len() < 4 {
        return Err(BqError::UnsupportedFormat(format!(
            "{what}: file shorter than the IDX magic"
        )));
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(BqError::UnsupportedFormat(format!(
            "{what}: bad IDX magic {:02x?}",
            &bytes[0..4]
        )));
    }
    if bytes[2] != 0x08 {
        return Err(BqError::UnsupportedFormat(format!(
            "{what}: unsupported dtype 0x{:02x}, only unsigned byte (0x08)",
            bytes[2]
        )));
    }
    let rank = bytes[3] as usize;
    if rank == 0 || rank > 4 {
        return Err(BqError::UnsupportedFormat(format!(
            "{what}: unsupported rank {rank}"
        )));
    }
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(BqError::UnsupportedFormat(format!(
            "{what}: truncated dimension list"
        )));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let at = 4 + 4 * i;
        dims.push(u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize);
    }
    let expected: usize = dims.iter().product();
    let data = &bytes[header..];
    if data.len() != expected {
        return Err(BqError::UnsupportedFormat(format!(
            "{what}: payload is {} bytes, dims {:?} require {expected}",
            data.len(),
            dims
        )));
    }
    Ok((dims, data.to_vec()))
}

/// Parse paired image/label IDX buffers.
pub fn parse_idx_dataset(images: &[u8], labels: &[u8]) -> Result<IdxDataset> {
    let (img_dims, img_data) = parse_idx(images, "images")?;
    let (lbl_dims, lbl_data) = parse_idx(labels, "labels")?;
    if lbl_dims.len() != 1 {
        return Err(BqError::UnsupportedFormat(format!(
            "labels: expected rank 1, got {}",
            lbl_dims.len()
        )));
    }
    let count = img_dims[0];
    if lbl_dims[0] != count {
        return Err(BqError::InvalidInput(format!(
            "label count {} does not match image count {count}",
            lbl_dims[0]
        )));
    }
    let dimension: usize = img_dims[1..].iter().product::<usize>().max(1);
    let features = img_data.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(IdxDataset {
        features,
        labels: lbl_data,
        dimension,
        count,
    })
}

/// Load paired image/label IDX files from disk.
pub fn load_idx_dataset(images: &Path, labels: &Path) -> Result<IdxDataset> {
    let img_bytes = std::fs::read(images)?;
    let lbl_bytes = std::fs::read(labels)?;
    parse_idx_dataset(&img_bytes, &lbl_bytes)
}

impl IdxDataset {
    /// Binary view of two classes with labels +1 (positive) and -1, with a
    /// constant bias feature appended.
    pub fn binary_subset(&self, positive: u8, negative: u8) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..self.count {
            let y = match self.labels[i] {
                l if l == positive => 1.0,
                l if l == negative => -1.0,
                _ => continue,
            };
            features.extend_from_slice(&self.features[i * self.dimension..(i + 1) * self.dimension]);
            features.push(1.0);
            labels.push(y);
        }
        if labels.is_empty() {
            return Err(BqError::InvalidInput(format!(
                "no samples with labels {positive} or {negative}"
            )));
        }
        Ok((features, labels))
    }
}
