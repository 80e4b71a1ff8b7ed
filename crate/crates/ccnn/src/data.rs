//! MNIST ingestion (IDX container format), feature scaling, deterministic
//! splits and minibatch ordering.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{derive, streams, Rng};
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Valid,
    Test,
}

/// Feature matrix plus integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: SplitTag,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        split: SplitTag,
    ) -> Result<Dataset> {
        if features.rows() != labels.len() {
            return Err(Error::IdxCountMismatch {
                images: features.rows(),
                labels: labels.len(),
            });
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: num_classes,
                    sample: i,
                });
            }
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows selected by index, in order.
    pub fn subset(&self, indices: &[usize], split: SplitTag) -> Dataset {
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| self.features.row(i).to_vec()).collect();
        Dataset {
            features: Matrix::from_rows(&rows).expect("rows share a width"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split,
        }
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxTruncated {
            path: path.to_string(),
            expected: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parse an IDX image/label pair into a dataset of raw byte features in
/// [0, 255], images flattened row-major.
pub fn load_idx(path_images: &Path, path_labels: &Path) -> Result<Dataset> {
    let img_name = path_images.display().to_string();
    let lbl_name = path_labels.display().to_string();
    let img_bytes = std::fs::read(path_images)?;
    let lbl_bytes = std::fs::read(path_labels)?;

    let magic = read_be_u32(&img_bytes, 0, &img_name)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::IdxBadMagic {
            path: img_name,
            found: magic,
            expected: IMAGES_MAGIC,
        });
    }
    let count = read_be_u32(&img_bytes, 4, &img_name)? as usize;
    let rows = read_be_u32(&img_bytes, 8, &img_name)? as usize;
    let cols = read_be_u32(&img_bytes, 12, &img_name)? as usize;
    let pixels = count * rows * cols;
    if img_bytes.len() != 16 + pixels {
        return Err(Error::IdxTruncated {
            path: img_name,
            expected: 16 + pixels,
            found: img_bytes.len(),
        });
    }

    let magic = read_be_u32(&lbl_bytes, 0, &lbl_name)?;
    if magic != LABELS_MAGIC {
        return Err(Error::IdxBadMagic {
            path: lbl_name,
            found: magic,
            expected: LABELS_MAGIC,
        });
    }
    let lbl_count = read_be_u32(&lbl_bytes, 4, &lbl_name)? as usize;
    if lbl_bytes.len() != 8 + lbl_count {
        return Err(Error::IdxTruncated {
            path: lbl_name,
            expected: 8 + lbl_count,
            found: lbl_bytes.len(),
        });
    }
    if count != lbl_count {
        return Err(Error::IdxCountMismatch {
            images: count,
            labels: lbl_count,
        });
    }

    let features = Matrix::from_vec(
        count,
        rows * cols,
        img_bytes[16..].iter().map(|&b| b as f64).collect(),
    )?;
    let labels: Vec<usize> = lbl_bytes[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(features, labels, num_classes, SplitTag::Train)
}

/// Transform parameters: x -> x / sqrt(sigma2_max) - offset.
#[derive(Debug, Clone, Copy)]
pub struct ScalingParams {
    pub sigma2_max: f64,
    pub offset: f64,
}

/// Maximum per-feature population variance of the training split.
pub fn fit_scaling(train: &Dataset) -> Result<ScalingParams> {
    let (n, d) = train.features.shape();
    if n == 0 {
        return Err(Error::ZeroVariance);
    }
    let mut sigma2_max = 0.0f64;
    for j in 0..d {
        let mut mean = 0.0;
        for i in 0..n {
            mean += train.features.get(i, j);
        }
        mean /= n as f64;
        let mut var = 0.0;
        for i in 0..n {
            let dx = train.features.get(i, j) - mean;
            var += dx * dx;
        }
        var /= n as f64;
        if var > sigma2_max {
            sigma2_max = var;
        }
    }
    if sigma2_max <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(ScalingParams {
        sigma2_max,
        offset: 0.5,
    })
}

/// Apply training-split scaling parameters to any split.
pub fn apply_scaling(ds: &Dataset, params: &ScalingParams) -> Dataset {
    let scale = 1.0 / params.sigma2_max.sqrt();
    let data: Vec<f64> = ds
        .features
        .data()
        .iter()
        .map(|&x| x * scale - params.offset)
        .collect();
    Dataset {
        features: Matrix::from_vec(ds.features.rows(), ds.features.cols(), data)
            .expect("affine map preserves finiteness"),
        labels: ds.labels.clone(),
        num_classes: ds.num_classes,
        split: ds.split,
    }
}

/// Deterministic disjoint train/validation split by seeded permutation.
pub fn split_and_shuffle(
    ds: &Dataset,
    train_size: usize,
    valid_size: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if train_size + valid_size > ds.len() {
        return Err(Error::SplitTooLarge {
            requested: train_size + valid_size,
            available: ds.len(),
        });
    }
    let mut rng = Rng::from_stream(seed, streams::SPLIT);
    let perm = rng.permutation(ds.len());
    let train = ds.subset(&perm[..train_size], SplitTag::Train);
    let valid = ds.subset(&perm[train_size..train_size + valid_size], SplitTag::Valid);
    Ok((train, valid))
}

/// Minibatch index order for one epoch: a fresh permutation derived from
/// (seed, epoch), chunked; the final short batch is kept.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = Rng::new(derive(derive(seed, streams::SHUFFLE), epoch as u64));
    let perm = rng.permutation(n);
    perm.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}
