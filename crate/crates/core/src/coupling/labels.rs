//! Labeling rules: pairwise voting, argmax of the coupled vector, thresholding.

use serde::{Deserialize, Serialize};

use crate::error::{OvoError, Result};
use crate::types::{PairwiseScoreMatrix, ProbabilityVector};

/// Winner of the pairwise vote and the per-class win counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub label: usize,
    pub votes: Vec<usize>,
}

/// Class with the most pairwise wins on raw scores; class `i` beats `j`
/// when `s_ij > s_ji`. Ties go to the smallest index.
pub fn vote_label(m: &PairwiseScoreMatrix) -> VoteOutcome {
    let k = m.k();
    let mut votes = vec![0usize; k];
    for (i, v) in votes.iter_mut().enumerate() {
        *v = (0..k).filter(|&j| j != i && m.raw(i, j) > m.raw(j, i)).count();
    }
    let label = first_max(votes.iter().map(|&v| v as f64));
    VoteOutcome { label, votes }
}

/// Index of the largest entry, smallest index on ties.
pub fn argmax_label(p: &ProbabilityVector) -> usize {
    first_max(p.values().iter().copied())
}

fn first_max(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Every class with `p_i >= theta`, ascending. May be empty.
pub fn threshold_labels(p: &ProbabilityVector, theta: f64) -> Result<Vec<usize>> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(OvoError::InvalidThreshold(theta));
    }
    Ok(p.values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= theta)
        .map(|(i, _)| i)
        .collect())
}
