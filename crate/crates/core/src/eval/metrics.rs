//! One-vs-rest confusion counts and the derived per-class metrics.

use serde::{Deserialize, Serialize};

use crate::error::{OvoError, Result};
use crate::types::ClassSet;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

/// Per-class metrics; `None` marks a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(OvoError::LengthMismatch(a, b))
    }
}

/// Counts for `class` treating every other class as negative.
pub fn confusion_counts(predicted: &[Vec<usize>], truth: &[Vec<usize>], class: usize) -> Result<ConfusionCounts> {
    check_lengths(predicted.len(), truth.len())?;
    let mut c = ConfusionCounts::default();
    for (p, t) in predicted.iter().zip(truth) {
        match (p.contains(&class), t.contains(&class)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(c: &ConfusionCounts) -> ClassMetrics {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let specificity = ratio(c.tn, c.tn + c.fp);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    ClassMetrics {
        precision,
        recall,
        specificity,
        f1,
    }
}

/// Fraction of exact label matches.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(predicted.len(), truth.len())?;
    if truth.is_empty() {
        return Err(OvoError::EmptyData("accuracy of zero samples".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub counts: ConfusionCounts,
    pub metrics: ClassMetrics,
}

/// Counts and metrics for every class.
pub fn class_reports(classes: &ClassSet, predicted: &[Vec<usize>], truth: &[Vec<usize>]) -> Result<Vec<ClassReport>> {
    (0..classes.k())
        .map(|c| {
            let counts = confusion_counts(predicted, truth, c)?;
            Ok(ClassReport {
                class: classes.name(c).to_string(),
                counts,
                metrics: metrics(&counts),
            })
        })
        .collect()
}
