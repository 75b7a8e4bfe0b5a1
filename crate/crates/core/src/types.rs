//! Domain types shared by every stage of the pipeline.
//!
//! Class pairs are always addressed by dense zero-based indices. Pairwise
//! quantities are stored once per unordered pair `(i, j)` with `i < j`, in
//! lexicographic order; the `(j, i)` orientation is the complement `1 - x`.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{OvoError, Result};

/// Allowed deviation of a probability vector's sum from 1.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Tolerance used by [`validate_scores`] for the complement and range checks.
pub const SCORE_TOL: f64 = 1e-9;

/// Number of unordered pairs among `k` classes.
pub fn pair_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Position of the unordered pair `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_index(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < k);
    i * (2 * k - i - 1) / 2 + (j - i - 1)
}

/// All unordered pairs `(i, j)` with `i < j`, in storage order.
pub fn pairs(k: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..k).flat_map(move |i| (i + 1..k).map(move |j| (i, j)))
}

/// Ordered list of distinct class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassSet {
    labels: Vec<String>,
}

impl ClassSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(OvoError::InvalidClassSet(format!(
                "need at least 2 classes, got {}",
                labels.len()
            )));
        }
        let mut seen = HashMap::with_capacity(labels.len());
        for (idx, name) in labels.iter().enumerate() {
            if let Some(prev) = seen.insert(name.as_str(), idx) {
                return Err(OvoError::InvalidClassSet(format!(
                    "duplicate class name {name:?} at positions {prev} and {idx}"
                )));
            }
        }
        Ok(Self { labels })
    }

    /// Classes named `"0"`, `"1"`, ... `k-1`.
    pub fn indexed(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i.to_string()).collect())
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }
}

impl TryFrom<Vec<String>> for ClassSet {
    type Error = OvoError;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<ClassSet> for Vec<String> {
    fn from(c: ClassSet) -> Self {
        c.labels
    }
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector {
    values: Vec<f64>,
}

impl ProbabilityVector {
    /// Accepts only nonnegative entries summing to 1 within [`SIMPLEX_TOL`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(OvoError::InvalidProbability("empty vector".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(OvoError::InvalidProbability(format!(
                    "entry {i} = {v} is negative or not finite"
                )));
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(OvoError::InvalidProbability(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self { values })
    }

    /// Clamps negative entries to zero and renormalizes.
    pub fn repaired(mut values: Vec<f64>) -> Result<Self> {
        for v in values.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = values.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(OvoError::InvalidProbability(format!(
                "cannot renormalize vector with mass {sum}"
            )));
        }
        for v in values.iter_mut() {
            *v /= sum;
        }
        Self::new(values)
    }

    pub fn uniform(k: usize) -> Self {
        Self {
            values: vec![1.0 / k as f64; k],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = OvoError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.values
    }
}

/// Pairwise conditional probability `p_i / (p_i + p_j)`.
pub fn mu(p: &ProbabilityVector, i: usize, j: usize) -> Result<f64> {
    let k = p.len();
    for idx in [i, j] {
        if idx >= k {
            return Err(OvoError::ClassIndex { index: idx, k });
        }
    }
    if i == j {
        return Err(OvoError::InvalidPair(i, j));
    }
    let denom = p.get(i) + p.get(j);
    if denom <= 0.0 {
        return Err(OvoError::DegeneratePair(i, j));
    }
    Ok(p.get(i) / denom)
}

/// Raw and (optionally) calibrated pairwise scores for one sample.
///
/// `raw(i, j)` is the binary classifier's estimate that the sample belongs
/// to class `i` rather than `j`; `calibrated(i, j)` is the sigmoid-calibrated
/// counterpart `r_ij`. Both are stored for `i < j` only.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseScoreMatrix {
    classes: ClassSet,
    raw: Vec<f64>,
    calibrated: Option<Vec<f64>>,
}

impl PairwiseScoreMatrix {
    /// Builds a matrix from upper-triangle raw scores in pair order.
    pub fn new(classes: ClassSet, raw: Vec<f64>) -> Result<Self> {
        let k = classes.k();
        if raw.len() != pair_count(k) {
            return Err(OvoError::Shape {
                expected: pair_count(k),
                actual: raw.len(),
            });
        }
        for ((i, j), &s) in pairs(k).zip(&raw) {
            if !(0.0..=1.0).contains(&s) {
                return Err(OvoError::InvalidScores {
                    row: i,
                    col: j,
                    reason: format!("raw score {s} outside [0, 1]"),
                });
            }
        }
        Ok(Self {
            classes,
            raw,
            calibrated: None,
        })
    }

    /// Builds a matrix from a function evaluated on every `i < j`.
    pub fn from_fn(classes: ClassSet, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let raw = pairs(classes.k()).map(|(i, j)| f(i, j)).collect();
        Self::new(classes, raw)
    }

    /// Attaches calibrated upper-triangle estimates, each strictly in (0, 1).
    pub fn with_calibrated(mut self, calibrated: Vec<f64>) -> Result<Self> {
        let k = self.k();
        if calibrated.len() != pair_count(k) {
            return Err(OvoError::Shape {
                expected: pair_count(k),
                actual: calibrated.len(),
            });
        }
        for ((i, j), &r) in pairs(k).zip(&calibrated) {
            if !(r > 0.0 && r < 1.0) {
                return Err(OvoError::InvalidScores {
                    row: i,
                    col: j,
                    reason: format!("calibrated estimate {r} outside (0, 1)"),
                });
            }
        }
        self.calibrated = Some(calibrated);
        Ok(self)
    }

    /// A matrix whose raw and calibrated entries both equal `r`.
    pub fn from_calibrated(classes: ClassSet, r: Vec<f64>) -> Result<Self> {
        Self::new(classes, r.clone())?.with_calibrated(r)
    }

    /// The matrix implied by a probability vector: `r_ij = mu(p, i, j)`.
    pub fn from_probabilities(classes: ClassSet, p: &ProbabilityVector) -> Result<Self> {
        let r = pairs(classes.k())
            .map(|(i, j)| mu(p, i, j))
            .collect::<Result<Vec<_>>>()?;
        Self::from_calibrated(classes, r)
    }

    pub fn k(&self) -> usize {
        self.classes.k()
    }

    pub fn classes(&self) -> &ClassSet {
        &self.classes
    }

    pub fn raw_upper(&self) -> &[f64] {
        &self.raw
    }

    pub fn calibrated_upper(&self) -> Option<&[f64]> {
        self.calibrated.as_deref()
    }

    pub fn is_calibrated(&self) -> bool {
        self.calibrated.is_some()
    }

    /// Raw score `s_ij`; the diagonal is unused and reads as NaN.
    pub fn raw(&self, i: usize, j: usize) -> f64 {
        oriented(&self.raw, self.k(), i, j)
    }

    /// Calibrated estimate `r_ij`, if calibration has been applied.
    pub fn calibrated(&self, i: usize, j: usize) -> Option<f64> {
        self.calibrated.as_deref().map(|r| oriented(r, self.k(), i, j))
    }

    /// Full row-major K×K view with NaN on the diagonal.
    pub fn to_dense(&self) -> DenseScores {
        let k = self.k();
        let dense = |upper: &[f64]| {
            let mut m = vec![f64::NAN; k * k];
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        m[i * k + j] = oriented(upper, k, i, j);
                    }
                }
            }
            m
        };
        DenseScores {
            k,
            raw: dense(&self.raw),
            calibrated: self.calibrated.as_deref().map(dense),
        }
    }

    /// Parses a dense view, rejecting it unless [`validate_scores`] accepts.
    pub fn from_dense(classes: ClassSet, dense: &DenseScores) -> Result<Self> {
        if dense.k != classes.k() {
            return Err(OvoError::Shape {
                expected: classes.k(),
                actual: dense.k,
            });
        }
        if let ScoreValidation::Reject { row, col, reason } = validate_scores(dense) {
            return Err(OvoError::InvalidScores { row, col, reason });
        }
        let k = dense.k;
        let upper = |m: &[f64]| -> Vec<f64> { pairs(k).map(|(i, j)| m[i * k + j].clamp(0.0, 1.0)).collect() };
        let out = Self::new(classes, upper(&dense.raw))?;
        match &dense.calibrated {
            Some(c) => out.with_calibrated(upper(c)),
            None => Ok(out),
        }
    }
}

fn oriented(upper: &[f64], k: usize, i: usize, j: usize) -> f64 {
    debug_assert!(i < k && j < k);
    match i.cmp(&j) {
        std::cmp::Ordering::Less => upper[pair_index(k, i, j)],
        std::cmp::Ordering::Greater => 1.0 - upper[pair_index(k, j, i)],
        std::cmp::Ordering::Equal => f64::NAN,
    }
}

/// Dense row-major K×K score storage, as read from external sources.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseScores {
    pub k: usize,
    pub raw: Vec<f64>,
    pub calibrated: Option<Vec<f64>>,
}

/// Outcome of [`validate_scores`].
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreValidation {
    Accept,
    /// First violating entry in row-major order, zero-based.
    Reject {
        row: usize,
        col: usize,
        reason: String,
    },
}

impl ScoreValidation {
    pub fn is_accept(&self) -> bool {
        matches!(self, ScoreValidation::Accept)
    }
}

/// Checks range and complement conventions of a dense score matrix.
///
/// Entries are scanned in row-major order. Each off-diagonal entry must be
/// finite and lie in `[0, 1]` (raw) or strictly inside `(0, 1)`
/// (calibrated); the complement `m[i][j] + m[j][i] = 1` is checked at the
/// lower-triangle entry of each pair. Range and complement use a tolerance
/// of [`SCORE_TOL`].
pub fn validate_scores(m: &DenseScores) -> ScoreValidation {
    let k = m.k;
    if m.raw.len() != k * k {
        return ScoreValidation::Reject {
            row: 0,
            col: 0,
            reason: format!("expected {} raw entries, got {}", k * k, m.raw.len()),
        };
    }
    if let Some(r) = check_dense(&m.raw, k, false) {
        return r;
    }
    if let Some(c) = &m.calibrated {
        if c.len() != k * k {
            return ScoreValidation::Reject {
                row: 0,
                col: 0,
                reason: format!("expected {} calibrated entries, got {}", k * k, c.len()),
            };
        }
        if let Some(r) = check_dense(c, k, true) {
            return r;
        }
    }
    ScoreValidation::Accept
}

fn check_dense(m: &[f64], k: usize, strict: bool) -> Option<ScoreValidation> {
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let v = m[i * k + j];
            let in_range = if strict {
                v > 0.0 && v < 1.0
            } else {
                (-SCORE_TOL..=1.0 + SCORE_TOL).contains(&v)
            };
            if !in_range {
                return Some(ScoreValidation::Reject {
                    row: i,
                    col: j,
                    reason: format!("entry {v} out of range"),
                });
            }
            if i > j {
                let other = m[j * k + i];
                if (v + other - 1.0).abs() > SCORE_TOL {
                    return Some(ScoreValidation::Reject {
                        row: i,
                        col: j,
                        reason: format!("complement violated: {v} + {other} = {}", v + other),
                    });
                }
            }
        }
    }
    None
}

/// Fitted sigmoid `r = 1 / (1 + exp(eta * s + tau))` for one class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    #[serde(skip)]
    pub pair: (usize, usize),
    pub eta: f64,
    pub tau: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_nll: f64,
}

impl CalibrationParams {
    /// Parameters mapping every score to 0.5.
    pub fn identity(pair: (usize, usize)) -> Self {
        Self {
            pair,
            eta: 0.0,
            tau: 0.0,
            iterations: 0,
            converged: true,
            final_nll: 0.0,
        }
    }

    pub fn with_values(pair: (usize, usize), eta: f64, tau: f64) -> Self {
        Self {
            eta,
            tau,
            ..Self::identity(pair)
        }
    }
}

/// Feature vectors with single- or multi-label class annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<Vec<usize>>,
    counts: Vec<usize>,
    classes: ClassSet,
}

impl LabeledDataset {
    /// Validates dimensions and label indices; label sets are sorted and
    /// deduplicated.
    pub fn new(classes: ClassSet, features: Vec<Vec<f64>>, labels: Vec<Vec<usize>>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(OvoError::LengthMismatch(features.len(), labels.len()));
        }
        let dim = features.first().map_or(1, Vec::len);
        if dim == 0 {
            return Err(OvoError::param("features", "dimension must be at least 1"));
        }
        for x in &features {
            if x.len() != dim {
                return Err(OvoError::Shape {
                    expected: dim,
                    actual: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(OvoError::param("features", "non-finite feature value"));
            }
        }
        let k = classes.k();
        let mut counts = vec![0; k];
        let mut labels = labels;
        for set in labels.iter_mut() {
            set.sort_unstable();
            set.dedup();
            for &c in set.iter() {
                if c >= k {
                    return Err(OvoError::ClassIndex { index: c, k });
                }
                counts[c] += 1;
            }
        }
        Ok(Self {
            features,
            labels,
            counts,
            classes,
        })
    }

    /// Single-label convenience constructor.
    pub fn single_label(classes: ClassSet, features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        Self::new(classes, features, labels.into_iter().map(|l| vec![l]).collect())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[Vec<usize>] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn classes(&self) -> &ClassSet {
        &self.classes
    }

    pub fn is_multi_label(&self) -> bool {
        self.labels.iter().any(|l| l.len() != 1)
    }

    /// The label of every sample, if each carries exactly one.
    pub fn single_labels(&self) -> Option<Vec<usize>> {
        self.labels
            .iter()
            .map(|l| if l.len() == 1 { Some(l[0]) } else { None })
            .collect()
    }

    /// Errors unless every class has at least one sample.
    pub fn require_all_classes(&self) -> Result<()> {
        match self.counts.iter().position(|&c| c == 0) {
            Some(c) => Err(OvoError::MissingClass(self.classes.name(c).to_string())),
            None => Ok(()),
        }
    }

    /// Samples at the given positions, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let features = indices.iter().map(|&i| self.features[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i].clone()).collect();
        Self::new(self.classes.clone(), features, labels).expect("subset of a valid dataset is valid")
    }
}

/// Pair weights `n_ij = N_i + N_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingWeights {
    k: usize,
    n: Vec<f64>,
}

impl CouplingWeights {
    pub fn from_counts(counts: &[usize]) -> Self {
        let k = counts.len();
        let n = pairs(k).map(|(i, j)| (counts[i] + counts[j]) as f64).collect();
        Self { k, n }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.n[pair_index(self.k, i, j)],
            std::cmp::Ordering::Greater => self.n[pair_index(self.k, j, i)],
            std::cmp::Ordering::Equal => f64::NAN,
        }
    }
}
