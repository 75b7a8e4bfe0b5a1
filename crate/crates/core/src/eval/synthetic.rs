//! Gaussian-blob datasets and stratified splitting.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{OvoError, Result};
use crate::seed::rng_for;
use crate::types::{ClassSet, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub k: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

/// Class means: a regular K-gon in the first two coordinates with adjacent
/// means `separation` apart, or evenly spaced points on a line when `dim == 1`.
pub fn class_means(k: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let mut m = vec![0.0; dim];
            if dim == 1 {
                m[0] = separation * c as f64;
            } else {
                let radius = separation / (2.0 * (std::f64::consts::PI / k as f64).sin());
                let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
                m[0] = radius * angle.cos();
                m[1] = radius * angle.sin();
            }
            m
        })
        .collect()
}

/// Class names `class_0 .. class_{k-1}`, zero-padded so lexical order
/// matches index order.
pub fn synthetic_classes(k: usize) -> Result<ClassSet> {
    let width = (k.max(2) - 1).to_string().len();
    ClassSet::new((0..k).map(|c| format!("class_{c:0width$}")).collect())
}

/// `k` unit-covariance Gaussian clusters of `per_class` samples each.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<LabeledDataset> {
    if cfg.k < 2 {
        return Err(OvoError::InvalidParameter {
            field: "k".into(),
            reason: "need at least 2 classes".into(),
        });
    }
    if cfg.per_class == 0 {
        return Err(OvoError::InvalidParameter {
            field: "per_class".into(),
            reason: "must be at least 1".into(),
        });
    }
    if cfg.dim == 0 {
        return Err(OvoError::InvalidParameter {
            field: "dim".into(),
            reason: "must be at least 1".into(),
        });
    }
    if !(cfg.separation.is_finite() && cfg.separation >= 0.0) {
        return Err(OvoError::InvalidParameter {
            field: "separation".into(),
            reason: "must be finite and >= 0".into(),
        });
    }
    let means = class_means(cfg.k, cfg.dim, cfg.separation);
    let mut rng = rng_for(cfg.seed, "synthetic", 0);
    let mut features = Vec::with_capacity(cfg.k * cfg.per_class);
    let mut labels = Vec::with_capacity(cfg.k * cfg.per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..cfg.per_class {
            let x = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect();
            features.push(x);
            labels.push(c);
        }
    }
    LabeledDataset::single_label(synthetic_classes(cfg.k)?, features, labels)
}

/// Splits every class separately, sending `round(fraction * n_c)` samples
/// (at least one) to the training side. Original order is kept on both sides.
pub fn stratified_split(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(OvoError::InvalidParameter {
            field: "train_fraction".into(),
            reason: format!("{train_fraction} outside (0, 1]"),
        });
    }
    let k = ds.classes().k();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (n, l) in ds.labels().iter().enumerate() {
        if let Some(&first) = l.first() {
            by_class[first].push(n);
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut rng = rng_for(seed, "split", c as u64);
        members.shuffle(&mut rng);
        let n_train = ((train_fraction * members.len() as f64).round() as usize).clamp(1, members.len());
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}
