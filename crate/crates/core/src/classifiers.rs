//! Binary and multi-output logistic models that produce pairwise scores.
//!
//! Two suite constructions are supported: one classifier trained from
//! scratch per unordered class pair, and per-class refinement of a
//! one-vs-all model. Scores computed elsewhere enter through
//! [`load_external_scores`].

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::calibration::parse_pair_key;
use crate::error::{OvoError, Result};
use crate::seed::rng_for;
use crate::types::{pair_count, pairs, ClassSet, LabeledDataset, PairwiseScoreMatrix};

/// Complement mismatch tolerated (and averaged away) in external scores.
pub const EXTERNAL_COMPLEMENT_TOL: f64 = 1e-6;

const MAX_STEP_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            epochs: 300,
            l2: 1e-3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for RefineHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 20,
            seed: 42,
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Logistic scorer for the pair `(i, j)`: scores near 1 mean class `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryLinearClassifier {
    pub pair: (usize, usize),
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinaryLinearClassifier {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(OvoError::Shape {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(logistic(dot(&self.weights, x) + self.bias))
    }
}

/// Mean cross-entropy plus `(l2 / 2) ||w||^2` and its gradient.
///
/// `params` holds the weights followed by the bias; targets may be soft.
pub fn logistic_objective(params: &[f64], xs: &[&[f64]], ys: &[f64], l2: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let (w, b) = (&params[..d], params[d]);
    let n = xs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (x, &y) in xs.iter().zip(ys) {
        let z = dot(w, x) + b;
        loss += y * softplus(-z) + (1.0 - y) * softplus(z);
        let err = logistic(z) - y;
        for (g, xi) in grad[..d].iter_mut().zip(x.iter()) {
            *g += err * xi;
        }
        grad[d] += err;
    }
    loss /= n;
    for g in grad.iter_mut() {
        *g /= n;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    for (g, wi) in grad[..d].iter_mut().zip(w) {
        *g += l2 * wi;
    }
    (loss, grad)
}

/// Full-batch gradient descent; the step is halved whenever it would
/// increase the loss, so the recorded trace never increases.
fn descend(mut params: Vec<f64>, xs: &[&[f64]], ys: &[f64], lr: f64, epochs: usize, l2: f64) -> (Vec<f64>, Vec<f64>) {
    let mut lr = lr;
    let (mut loss, mut grad) = logistic_objective(&params, xs, ys, l2);
    let mut trace = Vec::with_capacity(epochs + 1);
    trace.push(loss);
    'epochs: for _ in 0..epochs {
        let mut halvings = 0;
        loop {
            let cand: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - lr * g).collect();
            let (cl, cg) = logistic_objective(&cand, xs, ys, l2);
            if cl <= loss {
                params = cand;
                loss = cl;
                grad = cg;
                break;
            }
            halvings += 1;
            if halvings > MAX_STEP_HALVINGS {
                break 'epochs;
            }
            lr *= 0.5;
        }
        trace.push(loss);
    }
    (params, trace)
}

fn initial_params(dim: usize, seed: u64, stream: &str, index: u64) -> Vec<f64> {
    let mut rng = rng_for(seed, stream, index);
    (0..=dim)
        .map(|c| if c < dim { rng.gen_range(-0.01..0.01) } else { 0.0 })
        .collect()
}

/// A trained binary model with its per-epoch loss trace.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub classifier: BinaryLinearClassifier,
    pub loss_trace: Vec<f64>,
}

fn common_dim(sets: &[&[Vec<f64>]]) -> Result<usize> {
    let mut dim = None;
    for x in sets.iter().flat_map(|s| s.iter()) {
        match dim {
            None => dim = Some(x.len()),
            Some(d) if d != x.len() => {
                return Err(OvoError::Shape {
                    expected: d,
                    actual: x.len(),
                })
            }
            _ => {}
        }
    }
    match dim {
        Some(d) if d > 0 => Ok(d),
        _ => Err(OvoError::param("features", "dimension must be at least 1")),
    }
}

/// Trains a logistic classifier separating `data_i` (target 1) from
/// `data_j` (target 0).
pub fn fit_binary_logistic(
    pair: (usize, usize),
    data_i: &[Vec<f64>],
    data_j: &[Vec<f64>],
    hyper: &LogisticHyper,
) -> Result<BinaryFit> {
    if data_i.is_empty() || data_j.is_empty() {
        return Err(OvoError::EmptyData(format!(
            "pair {pair:?} needs samples of both classes"
        )));
    }
    let dim = common_dim(&[data_i, data_j])?;
    let xs: Vec<&[f64]> = data_i.iter().chain(data_j).map(Vec::as_slice).collect();
    let ys: Vec<f64> = std::iter::repeat_n(1.0, data_i.len())
        .chain(std::iter::repeat_n(0.0, data_j.len()))
        .collect();
    let index = (pair.0 as u64) << 32 | pair.1 as u64;
    let init = initial_params(dim, hyper.seed, "pair", index);
    let (params, loss_trace) = descend(init, &xs, &ys, hyper.learning_rate, hyper.epochs, hyper.l2);
    Ok(BinaryFit {
        classifier: BinaryLinearClassifier {
            pair,
            weights: params[..dim].to_vec(),
            bias: params[dim],
        },
        loss_trace,
    })
}

pub fn train_binary_logistic(
    pair: (usize, usize),
    data_i: &[Vec<f64>],
    data_j: &[Vec<f64>],
    hyper: &LogisticHyper,
) -> Result<BinaryLinearClassifier> {
    fit_binary_logistic(pair, data_i, data_j, hyper).map(|f| f.classifier)
}

/// How a suite's pair scorers were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    PairwiseScratch,
    OvaRefined,
    External,
}

/// One scorer per unordered class pair, in pair order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSuite {
    pub classes: ClassSet,
    pub dim: usize,
    pub provenance: Provenance,
    pub scorers: Vec<BinaryLinearClassifier>,
    /// `(N_i, N_j)` of each pair's training subset.
    pub pair_counts: Vec<(usize, usize)>,
}

impl ClassifierSuite {
    pub fn k(&self) -> usize {
        self.classes.k()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.scorers.len() != pair_count(k) || self.pair_counts.len() != pair_count(k) {
            return Err(OvoError::param(
                "scorers",
                format!("expected {} pair scorers, found {}", pair_count(k), self.scorers.len()),
            ));
        }
        for (s, pair) in self.scorers.iter().zip(pairs(k)) {
            if s.pair != pair {
                return Err(OvoError::param(
                    "scorers",
                    format!("scorer for {:?} found where {pair:?} expected", s.pair),
                ));
            }
            if s.dim() != self.dim {
                return Err(OvoError::Shape {
                    expected: self.dim,
                    actual: s.dim(),
                });
            }
            if !(s.bias.is_finite() && s.weights.iter().all(|w| w.is_finite())) {
                return Err(OvoError::param("scorers", format!("non-finite weights for {pair:?}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let suite: Self = serde_json::from_str(json)?;
        suite.validate()?;
        Ok(suite)
    }
}

/// Samples used to train the pair `(i, j)`: `(sample index, is_class_i)`.
///
/// A sample belongs to the pair when its labels contain exactly one of `i`
/// and `j`; all other classes are excluded.
pub fn pair_training_set(ds: &LabeledDataset, i: usize, j: usize) -> Vec<(usize, bool)> {
    ds.labels()
        .iter()
        .enumerate()
        .filter_map(|(n, l)| {
            let (has_i, has_j) = (l.contains(&i), l.contains(&j));
            (has_i != has_j).then_some((n, has_i))
        })
        .collect()
}

type Split = (Vec<Vec<f64>>, Vec<Vec<f64>>);

fn split_pair(ds: &LabeledDataset, i: usize, j: usize) -> Result<Split> {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (n, is_i) in pair_training_set(ds, i, j) {
        let x = ds.features()[n].clone();
        if is_i {
            pos.push(x)
        } else {
            neg.push(x)
        }
    }
    for (set, c) in [(&pos, i), (&neg, j)] {
        if set.is_empty() {
            return Err(OvoError::MissingClass(ds.classes().name(c).to_string()));
        }
    }
    Ok((pos, neg))
}

/// One logistic classifier per unordered pair, each trained only on the
/// samples of its two classes.
pub fn train_pairwise_suite(ds: &LabeledDataset, hyper: &LogisticHyper) -> Result<ClassifierSuite> {
    ds.require_all_classes()?;
    let k = ds.classes().k();
    let all: Vec<(usize, usize)> = pairs(k).collect();
    let trained = all
        .par_iter()
        .map(|&(i, j)| {
            let (pos, neg) = split_pair(ds, i, j)?;
            let counts = (pos.len(), neg.len());
            train_binary_logistic((i, j), &pos, &neg, hyper).map(|c| (c, counts))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scorers, pair_counts) = trained.into_iter().unzip();
    Ok(ClassifierSuite {
        classes: ds.classes().clone(),
        dim: ds.dim(),
        provenance: Provenance::PairwiseScratch,
        scorers,
        pair_counts,
    })
}

/// K logistic nodes sharing one input, node `i` modelling class `i` vs rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiOutputModel {
    pub classes: ClassSet,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl MultiOutputModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn node(&self, i: usize, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(OvoError::Shape {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(logistic(dot(&self.weights[i], x) + self.bias[i]))
    }

    pub fn outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.weights.len()).map(|i| self.node(i, x)).collect()
    }

    /// Node with the largest output, smallest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let out = self.outputs(x)?;
        let mut best = 0;
        for (i, &v) in out.iter().enumerate() {
            if v > out[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.classes.k();
        if self.weights.len() != k || self.bias.len() != k {
            return Err(OvoError::param("weights", format!("expected {k} output nodes")));
        }
        let d = self.dim();
        if d == 0 || self.weights.iter().any(|w| w.len() != d) {
            return Err(OvoError::param("weights", "ragged or empty weight rows"));
        }
        Ok(())
    }
}

/// Trains each output node as a one-vs-all logistic classifier.
pub fn train_multioutput(ds: &LabeledDataset, hyper: &LogisticHyper) -> Result<MultiOutputModel> {
    ds.require_all_classes()?;
    let k = ds.classes().k();
    let dim = ds.dim();
    let xs: Vec<&[f64]> = ds.features().iter().map(Vec::as_slice).collect();
    let nodes = (0..k)
        .into_par_iter()
        .map(|c| {
            let ys: Vec<f64> = ds
                .labels()
                .iter()
                .map(|l| if l.contains(&c) { 1.0 } else { 0.0 })
                .collect();
            let init = initial_params(dim, hyper.seed, "ova", c as u64);
            descend(init, &xs, &ys, hyper.learning_rate, hyper.epochs, hyper.l2).0
        })
        .collect::<Vec<_>>();
    let (weights, bias) = nodes.into_iter().map(|p| (p[..dim].to_vec(), p[dim])).unzip();
    Ok(MultiOutputModel {
        classes: ds.classes().clone(),
        weights,
        bias,
    })
}

/// Derives pair scorers from a one-vs-all model.
///
/// For every class `j` a copy of the base model is fine-tuned on the
/// class-`j` samples alone, driving each node `i != j` towards 0. The pair
/// `(i, j)`, `i < j`, is then scored by node `i` of the class-`j` copy.
pub fn refine_ova_to_ovo(
    model: &MultiOutputModel,
    ds: &LabeledDataset,
    hyper: &RefineHyper,
) -> Result<ClassifierSuite> {
    model.validate()?;
    if model.classes != *ds.classes() {
        return Err(OvoError::param("classes", "model and dataset class sets differ"));
    }
    if model.dim() != ds.dim() {
        return Err(OvoError::Shape {
            expected: model.dim(),
            actual: ds.dim(),
        });
    }
    ds.require_all_classes()?;
    let k = model.classes.k();
    let all: Vec<(usize, usize)> = pairs(k).collect();
    let trained = all
        .par_iter()
        .map(|&(i, j)| {
            let subset: Vec<&[f64]> = ds
                .labels()
                .iter()
                .zip(ds.features())
                .filter(|(l, _)| l.contains(&j))
                .map(|(_, x)| x.as_slice())
                .collect();
            let mut init = model.weights[i].clone();
            init.push(model.bias[i]);
            let params = if hyper.epochs == 0 {
                init
            } else {
                let ys = vec![0.0; subset.len()];
                descend(init, &subset, &ys, hyper.learning_rate, hyper.epochs, 0.0).0
            };
            let d = model.dim();
            let counts = pair_training_set(ds, i, j)
                .iter()
                .fold((0, 0), |(a, b), &(_, is_i)| if is_i { (a + 1, b) } else { (a, b + 1) });
            Ok((
                BinaryLinearClassifier {
                    pair: (i, j),
                    weights: params[..d].to_vec(),
                    bias: params[d],
                },
                counts,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (scorers, pair_counts) = trained.into_iter().unzip();
    Ok(ClassifierSuite {
        classes: model.classes.clone(),
        dim: model.dim(),
        provenance: Provenance::OvaRefined,
        scorers,
        pair_counts,
    })
}

/// Raw pairwise scores of one sample.
pub fn score_sample(suite: &ClassifierSuite, x: &[f64]) -> Result<PairwiseScoreMatrix> {
    let raw = suite.scorers.iter().map(|s| s.score(x)).collect::<Result<Vec<_>>>()?;
    PairwiseScoreMatrix::new(suite.classes.clone(), raw)
}

/// On-disk layout of an external score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub classes: Vec<String>,
    pub samples: Vec<ScoreFileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFileRecord {
    pub id: String,
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<LabelField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelField {
    One(String),
    Many(Vec<String>),
}

/// A validated external score record.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub id: String,
    pub matrix: PairwiseScoreMatrix,
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalScores {
    pub classes: ClassSet,
    pub provenance: Provenance,
    pub records: Vec<ScoreRecord>,
}

impl ScoreFile {
    /// Builds the file form of already-validated matrices (upper pairs only).
    pub fn from_records(classes: &ClassSet, records: &[ScoreRecord]) -> Self {
        let samples = records
            .iter()
            .map(|r| ScoreFileRecord {
                id: r.id.clone(),
                scores: pairs(classes.k())
                    .map(|(i, j)| (format!("{i},{j}"), r.matrix.raw(i, j)))
                    .collect(),
                label: r.labels.as_ref().map(|ls| {
                    let names: Vec<String> = ls.iter().map(|&l| classes.name(l).to_string()).collect();
                    if names.len() == 1 {
                        LabelField::One(names[0].clone())
                    } else {
                        LabelField::Many(names)
                    }
                }),
            })
            .collect();
        Self {
            classes: classes.labels().to_vec(),
            samples,
        }
    }

    /// Validates every record; the first failure names its record index.
    pub fn into_scores(self) -> Result<ExternalScores> {
        let classes = ClassSet::new(self.classes)?;
        let k = classes.k();
        let records = self
            .samples
            .into_iter()
            .enumerate()
            .map(|(idx, rec)| parse_record(&classes, k, idx, rec))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExternalScores {
            classes,
            provenance: Provenance::External,
            records,
        })
    }
}

fn parse_record(classes: &ClassSet, k: usize, record: usize, rec: ScoreFileRecord) -> Result<ScoreRecord> {
    let fail = |reason: String| OvoError::InvalidRecord { record, reason };
    let mut dense: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (key, &v) in &rec.scores {
        let (a, b) = parse_pair_key(key).map_err(|e| fail(e.to_string()))?;
        if a == b || a >= k || b >= k {
            return Err(fail(format!("invalid pair key {key:?} for {k} classes")));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(fail(format!("score {v} for {key:?} outside [0, 1]")));
        }
        dense.insert((a, b), v);
    }
    let mut raw = Vec::with_capacity(pair_count(k));
    for (i, j) in pairs(k) {
        let s = match (dense.get(&(i, j)), dense.get(&(j, i))) {
            (Some(&s_ij), Some(&s_ji)) => {
                let gap = (s_ij + s_ji - 1.0).abs();
                if gap > EXTERNAL_COMPLEMENT_TOL {
                    return Err(fail(format!(
                        "complement violated at ({i},{j}): {s_ij} + {s_ji} = {}",
                        s_ij + s_ji
                    )));
                }
                (0.5 * (s_ij + 1.0 - s_ji)).clamp(0.0, 1.0)
            }
            (Some(&s_ij), None) => s_ij,
            (None, Some(&s_ji)) => 1.0 - s_ji,
            (None, None) => return Err(fail(format!("missing score for pair ({i},{j})"))),
        };
        raw.push(s);
    }
    let matrix = PairwiseScoreMatrix::new(classes.clone(), raw).map_err(|e| fail(e.to_string()))?;
    let labels = match rec.label {
        None => None,
        Some(field) => {
            let names = match field {
                LabelField::One(n) => vec![n],
                LabelField::Many(ns) => ns,
            };
            let mut idx = names
                .iter()
                .map(|n| {
                    classes
                        .index_of(n)
                        .ok_or_else(|| fail(format!("unknown class label {n:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            idx.sort_unstable();
            idx.dedup();
            Some(idx)
        }
    };
    Ok(ScoreRecord {
        id: rec.id,
        matrix,
        labels,
    })
}

pub fn parse_external_scores(json: &str) -> Result<ExternalScores> {
    let file: ScoreFile = serde_json::from_str(json)?;
    file.into_scores()
}

pub fn load_external_scores(path: impl AsRef<Path>) -> Result<ExternalScores> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| OvoError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_external_scores(&text)
}
