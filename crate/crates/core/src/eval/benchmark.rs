//! Seeded comparison of labeling strategies on synthetic blobs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{class_reports, ClassReport};
use super::synthetic::{gen_synthetic, stratified_split, SyntheticConfig};
use crate::calibration::FitOptions;
use crate::classifiers::{
    refine_ova_to_ovo, score_sample, train_multioutput, train_pairwise_suite, ClassifierSuite, LogisticHyper,
    MultiOutputModel, RefineHyper,
};
use crate::coupling::vote_label;
use crate::error::{OvoError, Result};
use crate::pipeline::{calibrate_suite, predict_sample};
use crate::seed::derive_seed;
use crate::types::{ClassSet, LabeledDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Pairwise suite, sigmoid calibration, QP coupling, argmax.
    Proposed,
    /// Pairwise suite, majority of pairwise wins on raw scores.
    Voting,
    /// Argmax of a one-vs-all multi-output model.
    Ova,
    /// One-vs-all model refined into pair scorers, then calibrated and coupled.
    Refined,
}

impl std::str::FromStr for Strategy {
    type Err = OvoError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Strategy::Proposed),
            "voting" => Ok(Strategy::Voting),
            "ova" => Ok(Strategy::Ova),
            "refined" => Ok(Strategy::Refined),
            other => Err(OvoError::InvalidParameter {
                field: "strategies".into(),
                reason: format!("unknown strategy {other:?}"),
            }),
        }
    }
}

fn default_train_fraction() -> f64 {
    0.5
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Proposed, Strategy::Voting, Strategy::Ova]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub k: usize,
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hyper: LogisticHyper,
    #[serde(default)]
    pub refine: RefineHyper,
    #[serde(default)]
    pub fit: FitOptions,
    /// Fraction of each training split reserved for calibration (0 = fit
    /// calibration on the classifier training data itself).
    #[serde(default)]
    pub calib_holdout: f64,
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(OvoError::InvalidParameter {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.seeds.is_empty() {
            return bad("seeds", "need at least one seed");
        }
        if self.strategies.is_empty() {
            return bad("strategies", "need at least one strategy");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction", "must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.calib_holdout) {
            return bad("calib_holdout", "must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyAccuracy {
    pub strategy: Strategy,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub accuracies: Vec<StrategyAccuracy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: Strategy,
    pub mean_accuracy: f64,
    /// Sample standard deviation over seeds (0 for a single seed).
    pub std_accuracy: f64,
    /// Confusion counts pooled over all seeds.
    pub per_class: Vec<ClassReport>,
}

/// Evaluation output of `evaluate` (overall accuracy and per-class
/// metrics) and of `benchmark` (per-seed records and strategy summaries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<BenchmarkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_class: Vec<ClassReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_seed: Vec<SeedRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strategies: Vec<StrategyReport>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn strategy(&self, s: Strategy) -> Option<&StrategyReport> {
        self.strategies.iter().find(|r| r.strategy == s)
    }

    /// Per-seed accuracies of one strategy, in seed order.
    pub fn seed_accuracies(&self, s: Strategy) -> Vec<f64> {
        self.per_seed
            .iter()
            .filter_map(|r| r.accuracies.iter().find(|a| a.strategy == s).map(|a| a.accuracy))
            .collect()
    }
}

/// Report for one set of predictions against ground truth.
pub fn evaluate(classes: &ClassSet, predicted: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<EvalReport> {
    let per_class = class_reports(classes, predicted, truth)?;
    if truth.is_empty() {
        return Err(OvoError::EmptyData("no samples to evaluate".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(EvalReport {
        classes: classes.labels().to_vec(),
        config: None,
        accuracy: Some(hits as f64 / truth.len() as f64),
        per_class,
        per_seed: Vec::new(),
        strategies: Vec::new(),
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

struct SeedOutcome {
    record: SeedRecord,
    truth: Vec<Vec<usize>>,
    predictions: Vec<Vec<Vec<usize>>>,
}

fn calibrated_coupling_labels(
    suite: &ClassifierSuite,
    calib_ds: &LabeledDataset,
    test: &LabeledDataset,
    fit: &FitOptions,
) -> Result<Vec<usize>> {
    let calib = calibrate_suite(suite, calib_ds, fit)?;
    test.features()
        .iter()
        .map(|x| predict_sample(suite, &calib, x, None).map(|p| p.label))
        .collect()
}

fn run_seed(cfg: &BenchmarkConfig, seed: u64) -> Result<SeedOutcome> {
    let ds = gen_synthetic(&SyntheticConfig {
        k: cfg.k,
        per_class: cfg.per_class,
        dim: cfg.dim,
        separation: cfg.separation,
        seed: derive_seed(seed, "data", 0),
    })?;
    let (train, test) = stratified_split(&ds, cfg.train_fraction, derive_seed(seed, "split", 0))?;
    if test.is_empty() {
        return Err(OvoError::EmptyData("test split is empty".into()));
    }
    let (fit_ds, calib_ds) = if cfg.calib_holdout > 0.0 {
        let (a, b) = stratified_split(&train, 1.0 - cfg.calib_holdout, derive_seed(seed, "calib-split", 0))?;
        (a, b)
    } else {
        (train.clone(), train.clone())
    };
    let hyper = LogisticHyper {
        seed: derive_seed(seed, "train", 0),
        ..cfg.hyper
    };
    let refine = RefineHyper {
        seed: derive_seed(seed, "refine", 0),
        ..cfg.refine
    };

    let needs_suite = cfg
        .strategies
        .iter()
        .any(|s| matches!(s, Strategy::Proposed | Strategy::Voting));
    let needs_ova = cfg
        .strategies
        .iter()
        .any(|s| matches!(s, Strategy::Ova | Strategy::Refined));
    let suite = needs_suite.then(|| train_pairwise_suite(&fit_ds, &hyper)).transpose()?;
    let ova: Option<MultiOutputModel> = needs_ova.then(|| train_multioutput(&fit_ds, &hyper)).transpose()?;

    let truth: Vec<usize> = test.labels().iter().map(|l| l[0]).collect();
    let mut accuracies = Vec::with_capacity(cfg.strategies.len());
    let mut predictions = Vec::with_capacity(cfg.strategies.len());
    for &strategy in &cfg.strategies {
        let labels: Vec<usize> = match strategy {
            Strategy::Proposed => {
                calibrated_coupling_labels(suite.as_ref().expect("suite"), &calib_ds, &test, &cfg.fit)?
            }
            Strategy::Voting => {
                let suite = suite.as_ref().expect("suite");
                test.features()
                    .iter()
                    .map(|x| score_sample(suite, x).map(|m| vote_label(&m).label))
                    .collect::<Result<_>>()?
            }
            Strategy::Ova => {
                let model = ova.as_ref().expect("ova");
                test.features()
                    .iter()
                    .map(|x| model.predict(x))
                    .collect::<Result<_>>()?
            }
            Strategy::Refined => {
                let refined = refine_ova_to_ovo(ova.as_ref().expect("ova"), &fit_ds, &refine)?;
                calibrated_coupling_labels(&refined, &calib_ds, &test, &cfg.fit)?
            }
        };
        let hits = labels.iter().zip(&truth).filter(|(a, b)| a == b).count();
        accuracies.push(StrategyAccuracy {
            strategy,
            accuracy: hits as f64 / truth.len() as f64,
        });
        predictions.push(labels.into_iter().map(|l| vec![l]).collect());
    }
    Ok(SeedOutcome {
        record: SeedRecord { seed, accuracies },
        truth: test.labels().to_vec(),
        predictions,
    })
}

/// Runs every strategy on every seed and summarizes accuracy per strategy.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let outcomes = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;

    let classes = gen_synthetic(&SyntheticConfig {
        k: cfg.k,
        per_class: 1,
        dim: cfg.dim,
        separation: cfg.separation,
        seed: 0,
    })?
    .classes()
    .clone();

    let truth: Vec<Vec<usize>> = outcomes.iter().flat_map(|o| o.truth.iter().cloned()).collect();
    let mut strategies = Vec::with_capacity(cfg.strategies.len());
    for (idx, &strategy) in cfg.strategies.iter().enumerate() {
        let accs: Vec<f64> = outcomes.iter().map(|o| o.record.accuracies[idx].accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        let preds: Vec<Vec<usize>> = outcomes
            .iter()
            .flat_map(|o| o.predictions[idx].iter().cloned())
            .collect();
        strategies.push(StrategyReport {
            strategy,
            mean_accuracy,
            std_accuracy,
            per_class: class_reports(&classes, &preds, &truth)?,
        });
    }
    Ok(EvalReport {
        classes: classes.labels().to_vec(),
        config: Some(cfg.clone()),
        accuracy: None,
        per_class: Vec::new(),
        per_seed: outcomes.into_iter().map(|o| o.record).collect(),
        strategies,
    })
}
