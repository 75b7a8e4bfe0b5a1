//! End-to-end glue: calibrate a suite, then couple and label samples.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    calibrate_matrix, fit_calibration, CalibrationFitData, CalibrationSet, FitOptions, PROB_FLOOR,
};
use crate::classifiers::{pair_training_set, score_sample, ClassifierSuite, ExternalScores};
use crate::coupling::{argmax_label, solve_coupling, threshold_labels, vote_label, CouplingMethod};
use crate::error::Result;
use crate::types::{pairs, LabeledDataset, PairwiseScoreMatrix, ProbabilityVector};

/// Fits the sigmoid of every pair on that pair's training subset of `ds`.
pub fn calibrate_suite(suite: &ClassifierSuite, ds: &LabeledDataset, opts: &FitOptions) -> Result<CalibrationSet> {
    suite.validate()?;
    let k = suite.k();
    let all: Vec<(usize, usize)> = pairs(k).collect();
    let fitted = all
        .par_iter()
        .zip(&suite.scorers)
        .map(|(&(i, j), scorer)| {
            let samples = pair_training_set(ds, i, j)
                .into_iter()
                .map(|(n, is_i)| scorer.score(&ds.features()[n]).map(|s| (s, is_i)))
                .collect::<Result<Vec<_>>>()?;
            fit_calibration(&CalibrationFitData::new((i, j), samples), opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = CalibrationSet::new(k);
    for p in fitted {
        set.insert(p)?;
    }
    Ok(set)
}

/// Fits calibration from labelled external score records.
pub fn calibrate_external(scores: &ExternalScores, opts: &FitOptions) -> Result<CalibrationSet> {
    let k = scores.classes.k();
    let all: Vec<(usize, usize)> = pairs(k).collect();
    let fitted = all
        .par_iter()
        .map(|&(i, j)| {
            let samples = scores
                .records
                .iter()
                .filter_map(|r| {
                    let labels = r.labels.as_ref()?;
                    let (has_i, has_j) = (labels.contains(&i), labels.contains(&j));
                    (has_i != has_j).then(|| (r.matrix.raw(i, j), has_i))
                })
                .collect();
            fit_calibration(&CalibrationFitData::new((i, j), samples), opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut set = CalibrationSet::new(k);
    for p in fitted {
        set.insert(p)?;
    }
    Ok(set)
}

/// Uses raw scores directly as pairwise estimates, clamped into (0, 1).
pub fn raw_as_calibrated(m: &PairwiseScoreMatrix) -> Result<PairwiseScoreMatrix> {
    let r = m
        .raw_upper()
        .iter()
        .map(|s| s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
        .collect();
    m.clone().with_calibrated(r)
}

/// Coupled probabilities and both labeling rules for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub p: ProbabilityVector,
    pub label: usize,
    /// Threshold labels, present in multi-label mode.
    pub labels: Option<Vec<usize>>,
    pub votes: Vec<usize>,
    pub method: CouplingMethod,
}

/// Couples an already calibrated matrix and labels it.
pub fn predict_calibrated(m: &PairwiseScoreMatrix, threshold: Option<f64>) -> Result<Prediction> {
    let sol = solve_coupling(m)?;
    let votes = vote_label(m).votes;
    let labels = threshold.map(|t| threshold_labels(&sol.p, t)).transpose()?;
    Ok(Prediction {
        label: argmax_label(&sol.p),
        labels,
        votes,
        method: sol.method,
        p: sol.p,
    })
}

pub fn predict_matrix(m: &PairwiseScoreMatrix, calib: &CalibrationSet, threshold: Option<f64>) -> Result<Prediction> {
    predict_calibrated(&calibrate_matrix(m, calib)?, threshold)
}

pub fn predict_sample(
    suite: &ClassifierSuite,
    calib: &CalibrationSet,
    x: &[f64],
    threshold: Option<f64>,
) -> Result<Prediction> {
    predict_matrix(&score_sample(suite, x)?, calib, threshold)
}

/// Predictions for every sample of `features`, in order.
pub fn predict_all(
    suite: &ClassifierSuite,
    calib: &CalibrationSet,
    features: &[Vec<f64>],
    threshold: Option<f64>,
) -> Result<Vec<Prediction>> {
    features
        .par_iter()
        .map(|x| predict_sample(suite, calib, x, threshold))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{train_pairwise_suite, LogisticHyper};
    use crate::types::ClassSet;

    #[test]
    fn pipeline_labels_training_points() {
        let classes = ClassSet::indexed(3).unwrap();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (c, centre) in [(0.0, 0.0), (4.0, 0.0), (0.0, 4.0)].iter().enumerate() {
            for k in 0..10 {
                let t = k as f64 * 0.6;
                features.push(vec![centre.0 + 0.5 * t.cos(), centre.1 + 0.5 * t.sin()]);
                labels.push(c);
            }
        }
        let ds = LabeledDataset::single_label(classes, features, labels.clone()).unwrap();
        let suite = train_pairwise_suite(&ds, &LogisticHyper::default()).unwrap();
        let calib = calibrate_suite(&suite, &ds, &FitOptions::default()).unwrap();
        assert!(calib.is_complete());
        let preds = predict_all(&suite, &calib, ds.features(), Some(0.5)).unwrap();
        for (p, &truth) in preds.iter().zip(&labels) {
            assert_eq!(p.label, truth);
            assert_eq!(p.votes[truth], 2);
            assert_eq!(p.labels.as_deref(), Some(&[truth][..]));
        }
    }

    #[test]
    fn raw_scores_can_stand_in_for_calibration() {
        let m = PairwiseScoreMatrix::new(ClassSet::indexed(2).unwrap(), vec![1.0]).unwrap();
        let c = raw_as_calibrated(&m).unwrap();
        assert_eq!(c.calibrated(0, 1), Some(1.0 - PROB_FLOOR));
        let pred = predict_calibrated(&c, None).unwrap();
        assert_eq!(pred.label, 0);
    }
}
