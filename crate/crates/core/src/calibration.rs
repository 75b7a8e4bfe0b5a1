//! Sigmoid calibration of pairwise classifier scores.
//!
//! Each unordered pair `(i, j)` gets its own sigmoid
//! `r = 1 / (1 + exp(eta * s + tau))`, fitted by minimizing the
//! cross-entropy against smoothed targets `(N_i + 1) / (N_i + 2)` for
//! class-i samples and `1 / (N_j + 2)` for class-j samples. The fit is a
//! damped Newton iteration with backtracking on the convex 2-D objective.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{OvoError, Result};
use crate::types::{pair_count, pairs, CalibrationParams, PairwiseScoreMatrix};

/// Calibrated estimates are kept this far away from 0 and 1.
pub const PROB_FLOOR: f64 = 1e-12;

const HESSIAN_RIDGE: f64 = 1e-12;
const MAX_HALVINGS: usize = 20;

/// Samples for one pair: `(score, from_class_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFitData {
    pair: (usize, usize),
    samples: Vec<(f64, bool)>,
    n_i: usize,
    n_j: usize,
}

impl CalibrationFitData {
    pub fn new(pair: (usize, usize), samples: Vec<(f64, bool)>) -> Self {
        let n_i = samples.iter().filter(|(_, pos)| *pos).count();
        let n_j = samples.len() - n_i;
        Self {
            pair,
            samples,
            n_i,
            n_j,
        }
    }

    pub fn pair(&self) -> (usize, usize) {
        self.pair
    }

    pub fn samples(&self) -> &[(f64, bool)] {
        &self.samples
    }

    pub fn n_i(&self) -> usize {
        self.n_i
    }

    pub fn n_j(&self) -> usize {
        self.n_j
    }

    /// Smoothed target of every sample, in sample order.
    pub fn targets(&self) -> Vec<f64> {
        let (t_pos, t_neg) = platt_targets(self.n_i, self.n_j);
        self.samples
            .iter()
            .map(|&(_, pos)| if pos { t_pos } else { t_neg })
            .collect()
    }
}

/// Newton iteration limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Smoothed targets `((N_i + 1) / (N_i + 2), 1 / (N_j + 2))`.
pub fn platt_targets(n_i: usize, n_j: usize) -> (f64, f64) {
    let (ni, nj) = (n_i as f64, n_j as f64);
    ((ni + 1.0) / (ni + 2.0), 1.0 / (nj + 2.0))
}

fn check_params(params: &CalibrationParams) -> Result<()> {
    if params.eta.is_finite() && params.tau.is_finite() {
        Ok(())
    } else {
        Err(OvoError::InvalidParams(format!(
            "eta = {}, tau = {}",
            params.eta, params.tau
        )))
    }
}

/// `1 / (1 + exp(z))` without overflow.
fn sigmoid_neg(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// `ln(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Maps a raw score to the calibrated pairwise probability.
pub fn apply_calibration(params: &CalibrationParams, score: f64) -> Result<f64> {
    check_params(params)?;
    if !score.is_finite() {
        return Err(OvoError::InvalidParams(format!("score {score} is not finite")));
    }
    Ok(sigmoid_neg(params.eta * score + params.tau))
}

fn nonempty(data: &CalibrationFitData) -> Result<()> {
    if data.samples.is_empty() {
        return Err(OvoError::EmptyData(format!(
            "no calibration samples for pair {:?}",
            data.pair
        )));
    }
    Ok(())
}

fn nll_at(eta: f64, tau: f64, scores: &[(f64, bool)], targets: &[f64]) -> f64 {
    // -[t ln r + (1-t) ln(1-r)] with ln r = -softplus(z), ln(1-r) = -softplus(-z)
    scores
        .iter()
        .zip(targets)
        .map(|(&(s, _), &t)| {
            let z = eta * s + tau;
            t * softplus(z) + (1.0 - t) * softplus(-z)
        })
        .sum()
}

/// `softplus(z + d) - softplus(z)` without cancellation for small `d`.
fn softplus_change(z: f64, d: f64) -> f64 {
    if d.abs() > 1.0 {
        return softplus(z + d) - softplus(z);
    }
    // ln((1 + e^(z+d)) / (1 + e^z)) = ln(1 + sigma(z) (e^d - 1))
    let sigma = sigmoid_neg(-z);
    (sigma * d.exp_m1()).ln_1p()
}

/// Change of the NLL when moving from `(eta, tau)` by `(d_eta, d_tau)`.
///
/// Summing per-sample differences keeps the result accurate when the
/// change is far below the rounding noise of the objective itself.
fn nll_change(eta: f64, tau: f64, d_eta: f64, d_tau: f64, scores: &[(f64, bool)], targets: &[f64]) -> f64 {
    scores
        .iter()
        .zip(targets)
        .map(|(&(s, _), &t)| {
            let z = eta * s + tau;
            let d = d_eta * s + d_tau;
            t * softplus_change(z, d) + (1.0 - t) * softplus_change(-z, -d)
        })
        .sum()
}

/// Gradient and Hessian of the NLL with respect to `(eta, tau)`.
fn derivatives(eta: f64, tau: f64, scores: &[(f64, bool)], targets: &[f64]) -> ([f64; 2], [f64; 3]) {
    let mut g = [0.0; 2];
    let mut h = [0.0; 3];
    for (&(s, _), &t) in scores.iter().zip(targets) {
        let r = sigmoid_neg(eta * s + tau);
        let d = t - r;
        g[0] += d * s;
        g[1] += d;
        let w = r * (1.0 - r);
        h[0] += w * s * s;
        h[1] += w * s;
        h[2] += w;
    }
    (g, h)
}

/// Cross-entropy objective of the sigmoid fit at `params`.
pub fn nll(params: &CalibrationParams, data: &CalibrationFitData) -> Result<f64> {
    check_params(params)?;
    nonempty(data)?;
    Ok(nll_at(params.eta, params.tau, &data.samples, &data.targets()))
}

/// Analytic gradient `[dF/deta, dF/dtau]` of [`nll`].
pub fn nll_gradient(params: &CalibrationParams, data: &CalibrationFitData) -> Result<[f64; 2]> {
    check_params(params)?;
    nonempty(data)?;
    Ok(derivatives(params.eta, params.tau, &data.samples, &data.targets()).0)
}

/// Fits `(eta, tau)` for one pair.
pub fn fit_calibration(data: &CalibrationFitData, opts: &FitOptions) -> Result<CalibrationParams> {
    fit_calibration_traced(data, opts).map(|(p, _)| p)
}

/// Like [`fit_calibration`], also returning the objective after every
/// accepted step (the first entry is the starting point; later entries
/// accumulate the per-step changes).
pub fn fit_calibration_traced(data: &CalibrationFitData, opts: &FitOptions) -> Result<(CalibrationParams, Vec<f64>)> {
    let (i, j) = data.pair;
    if data.n_i == 0 || data.n_j == 0 {
        return Err(OvoError::EmptyData(format!(
            "pair ({i}, {j}) needs samples of both classes, got {} and {}",
            data.n_i, data.n_j
        )));
    }
    let samples = &data.samples;
    if samples.iter().any(|(s, _)| !s.is_finite()) {
        return Err(OvoError::InvalidParams(format!(
            "non-finite score in calibration data for pair ({i}, {j})"
        )));
    }
    let first = samples[0].0;
    if samples.iter().all(|&(s, _)| s == first) {
        return Err(OvoError::DegenerateFit {
            i,
            j,
            reason: format!("all scores equal {first}; the slope is unidentifiable"),
        });
    }

    let targets = data.targets();
    let mut eta = 0.0;
    let mut tau = ((data.n_j as f64 + 1.0) / (data.n_i as f64 + 1.0)).ln();
    let mut f = nll_at(eta, tau, samples, &targets);
    let mut trace = vec![f];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let (g, h) = derivatives(eta, tau, samples, &targets);
        if g[0].abs().max(g[1].abs()) < opts.tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        let (a, b, c) = (h[0] + HESSIAN_RIDGE, h[1], h[2] + HESSIAN_RIDGE);
        let det = a * c - b * b;
        let (d_eta, d_tau) = if det > 0.0 && det.is_finite() {
            ((-c * g[0] + b * g[1]) / det, (b * g[0] - a * g[1]) / det)
        } else {
            (-g[0], -g[1])
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let (de, dt) = (step * d_eta, step * d_tau);
            let delta = nll_change(eta, tau, de, dt, samples, &targets);
            if delta <= 0.0 {
                accepted = Some((eta + de, tau + dt, delta));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((ce, ct, delta)) => {
                eta = ce;
                tau = ct;
                f += delta;
                trace.push(f);
            }
            // No decrease along the Newton direction.
            None => break,
        }
    }

    if eta >= 0.0 {
        log::warn!("calibration for pair ({i}, {j}) has eta = {eta:.6} >= 0: higher scores do not favour class {i}");
    }
    if !converged {
        log::debug!("calibration for pair ({i}, {j}) stopped after {iterations} iterations without convergence");
    }
    Ok((
        CalibrationParams {
            pair: data.pair,
            eta,
            tau,
            iterations,
            converged,
            final_nll: nll_at(eta, tau, samples, &targets),
        },
        trace,
    ))
}

/// Calibration parameters for every unordered pair of a class set.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    k: usize,
    params: BTreeMap<(usize, usize), CalibrationParams>,
}

impl CalibrationSet {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            params: BTreeMap::new(),
        }
    }

    /// Identity calibration (every estimate 0.5) for all pairs.
    pub fn identity(k: usize) -> Self {
        let mut set = Self::new(k);
        for pair in pairs(k) {
            set.insert(CalibrationParams::identity(pair)).expect("valid pair");
        }
        set
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn insert(&mut self, params: CalibrationParams) -> Result<()> {
        let (i, j) = params.pair;
        if !(i < j && j < self.k) {
            return Err(OvoError::InvalidPair(i, j));
        }
        check_params(&params)?;
        self.params.insert((i, j), params);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&CalibrationParams> {
        self.params.get(&(i, j))
    }

    pub fn is_complete(&self) -> bool {
        self.params.len() == pair_count(self.k)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CalibrationParams> {
        self.params.values()
    }

    /// JSON object keyed by `"i,j"`.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<String, &CalibrationParams> =
            self.params.iter().map(|(&(i, j), p)| (format!("{i},{j}"), p)).collect();
        Ok(serde_json::to_string_pretty(&map)?)
    }

    /// Parses the `"i,j"`-keyed form; the class count comes from the caller.
    pub fn from_json(json: &str, k: usize) -> Result<Self> {
        let map: BTreeMap<String, CalibrationParams> = serde_json::from_str(json)?;
        let mut set = Self::new(k);
        for (key, mut params) in map {
            params.pair = parse_pair_key(&key)?;
            set.insert(params)?;
        }
        Ok(set)
    }
}

/// Parses `"i,j"` into a pair of indices.
pub fn parse_pair_key(key: &str) -> Result<(usize, usize)> {
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| OvoError::Parse(format!("bad pair key {key:?}")))
    };
    match key.split_once(',') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => Err(OvoError::Parse(format!("bad pair key {key:?}"))),
    }
}

/// Applies per-pair calibration to the raw scores of `m`.
pub fn calibrate_matrix(m: &PairwiseScoreMatrix, params: &CalibrationSet) -> Result<PairwiseScoreMatrix> {
    let calibrated = pairs(m.k())
        .map(|(i, j)| {
            let p = params.get(i, j).ok_or(OvoError::MissingCalibration(i, j))?;
            let r = apply_calibration(p, m.raw(i, j))?;
            Ok(r.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR))
        })
        .collect::<Result<Vec<_>>>()?;
    m.clone().with_calibrated(calibrated)
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::types::{validate_scores, ClassSet};
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn two_sample() -> CalibrationFitData {
        CalibrationFitData::new((0, 1), vec![(1.0, true), (0.0, false)])
    }

    #[test]
    fn target_examples() {
        let (a, b) = platt_targets(1, 1);
        assert!((a - 2.0 / 3.0).abs() < 1e-15 && (b - 1.0 / 3.0).abs() < 1e-15);
        let (a, b) = platt_targets(98, 198);
        assert!((a - 0.99).abs() < 1e-15 && (b - 0.005).abs() < 1e-15);
        assert_eq!(platt_targets(0, 0), (0.5, 0.5));
    }

    #[test]
    fn apply_examples() {
        let id = CalibrationParams::identity((0, 1));
        for s in [-3.0, 0.0, 0.25, 1.0, 1e6] {
            assert_eq!(apply_calibration(&id, s).unwrap(), 0.5);
        }
        let fit = CalibrationParams::with_values((0, 1), -1.386294, 0.693147);
        assert!((apply_calibration(&fit, 1.0).unwrap() - 2.0 / 3.0).abs() < 1e-6);
        let steep = CalibrationParams::with_values((0, 1), -10.0, 5.0);
        let expected = 1.0 / (1.0 + (-5.0f64).exp());
        assert!((apply_calibration(&steep, 1.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.993307).abs() < 1e-6);
        let bad = CalibrationParams::with_values((0, 1), f64::NAN, 0.0);
        assert!(matches!(apply_calibration(&bad, 0.5), Err(OvoError::InvalidParams(_))));
    }

    #[test]
    fn nll_examples() {
        let data = two_sample();
        let at_zero = nll(&CalibrationParams::identity((0, 1)), &data).unwrap();
        // brute-force sum of -[t ln 0.5 + (1-t) ln 0.5]
        let brute: f64 = data
            .targets()
            .iter()
            .map(|t| -(t * 0.5f64.ln() + (1.0 - t) * 0.5f64.ln()))
            .sum();
        assert!((at_zero - brute).abs() < 1e-14);
        assert!((at_zero - 1.386294).abs() < 1e-6);

        let opt = CalibrationParams::with_values((0, 1), -2.0 * LN2, LN2);
        let entropy = -(2.0 / 3.0 * (2.0f64 / 3.0).ln() + 1.0 / 3.0 * (1.0f64 / 3.0).ln());
        let at_opt = nll(&opt, &data).unwrap();
        assert!((at_opt - 2.0 * entropy).abs() < 1e-12);
        assert!((at_opt - 1.273028).abs() < 1e-6);

        // single sample with r = t: cross-entropy equals binary entropy of t
        let single = CalibrationFitData::new((0, 1), vec![(0.0, true)]);
        let t = single.targets()[0];
        let tau = ((1.0 - t) / t).ln();
        let v = nll(&CalibrationParams::with_values((0, 1), 0.0, tau), &single).unwrap();
        let h = -(t * t.ln() + (1.0 - t) * (1.0 - t).ln());
        assert!((v - h).abs() < 1e-12);

        let empty = CalibrationFitData::new((0, 1), vec![]);
        assert!(matches!(nll(&opt, &empty), Err(OvoError::EmptyData(_))));
    }

    #[test]
    fn two_sample_fit_hits_analytic_optimum() {
        let p = fit_calibration(&two_sample(), &FitOptions::default()).unwrap();
        assert!(p.converged);
        assert!((p.eta + 2.0 * LN2).abs() < 1e-6, "eta = {}", p.eta);
        assert!((p.tau - LN2).abs() < 1e-6, "tau = {}", p.tau);
        assert!((p.final_nll - 1.273028).abs() < 1e-6);
    }

    #[test]
    fn identical_scores_are_degenerate() {
        let data = CalibrationFitData::new((0, 2), vec![(0.5, true), (0.5, false), (0.5, true)]);
        assert!(matches!(
            fit_calibration(&data, &FitOptions::default()),
            Err(OvoError::DegenerateFit { i: 0, j: 2, .. })
        ));
        let one_sided = CalibrationFitData::new((0, 1), vec![(0.1, true), (0.9, true)]);
        assert!(matches!(
            fit_calibration(&one_sided, &FitOptions::default()),
            Err(OvoError::EmptyData(_))
        ));
    }

    #[test]
    fn separated_fixture_converges_monotonically() {
        let samples: Vec<(f64, bool)> = (0..100)
            .map(|k| {
                let u = (k % 50) as f64 / 49.0;
                if k < 50 {
                    (0.9 + 0.1 * u, true)
                } else {
                    (0.1 * u, false)
                }
            })
            .collect();
        let data = CalibrationFitData::new((0, 1), samples);
        let (p, trace) = fit_calibration_traced(&data, &FitOptions::default()).unwrap();
        assert!(p.converged);
        assert!(p.eta < 0.0);
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        let g = nll_gradient(&p, &data).unwrap();
        assert!(g[0].abs().max(g[1].abs()) < 1e-10);
        assert!((trace.last().unwrap() - p.final_nll).abs() < 1e-12);
    }

    #[test]
    fn calibrate_matrix_examples() {
        let classes = ClassSet::indexed(2).unwrap();
        let m = PairwiseScoreMatrix::new(classes, vec![1.0]).unwrap();
        let mut set = CalibrationSet::new(2);
        set.insert(fit_calibration(&two_sample(), &FitOptions::default()).unwrap())
            .unwrap();
        let c = calibrate_matrix(&m, &set).unwrap();
        assert!((c.calibrated(0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-6);
        assert!((c.calibrated(1, 0).unwrap() - 1.0 / 3.0).abs() < 1e-6);
        assert_eq!(c.raw(0, 1), 1.0);

        let classes = ClassSet::indexed(3).unwrap();
        let m = PairwiseScoreMatrix::new(classes, vec![0.9, 0.2, 0.6]).unwrap();
        let c = calibrate_matrix(&m, &CalibrationSet::identity(3)).unwrap();
        assert!(c.calibrated_upper().unwrap().iter().all(|&r| r == 0.5));

        let mut partial = CalibrationSet::new(3);
        partial.insert(CalibrationParams::identity((0, 1))).unwrap();
        partial.insert(CalibrationParams::identity((1, 2))).unwrap();
        assert_eq!(calibrate_matrix(&m, &partial), Err(OvoError::MissingCalibration(0, 2)));
    }

    #[test]
    fn calibration_file_round_trips() {
        let mut set = CalibrationSet::new(3);
        set.insert(CalibrationParams::with_values((0, 1), -1.0 / 3.0, 0.1))
            .unwrap();
        set.insert(CalibrationParams::with_values((0, 2), -7.25, 3.0)).unwrap();
        set.insert(CalibrationParams::with_values((1, 2), 1e-300, -2.5))
            .unwrap();
        let json = set.to_json().unwrap();
        assert!(json.contains("\"0,2\""));
        assert_eq!(CalibrationSet::from_json(&json, 3).unwrap(), set);
        assert!(CalibrationSet::from_json(
            r#"{"2,1": {"eta":0,"tau":0,"iterations":0,"converged":true,"final_nll":0}}"#,
            3
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_score(eta in -20.0f64..20.0, tau in -20.0f64..20.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assume!(a < b);
            let p = CalibrationParams::with_values((0, 1), eta, tau);
            let (ra, rb) = (apply_calibration(&p, a).unwrap(), apply_calibration(&p, b).unwrap());
            if eta > 0.0 { prop_assert!(rb <= ra) } else if eta < 0.0 { prop_assert!(rb >= ra) } else { prop_assert_eq!(ra, rb) }
        }

        #[test]
        fn finite_over_wide_range(z in -1000.0f64..1000.0, pos: bool) {
            let p = CalibrationParams::with_values((0, 1), 1.0, z - 0.5);
            let r = apply_calibration(&p, 0.5).unwrap();
            prop_assert!(r.is_finite() && (0.0..=1.0).contains(&r));
            let data = CalibrationFitData::new((0, 1), vec![(0.5, pos)]);
            let f = nll(&p, &data).unwrap();
            prop_assert!(f.is_finite() && f >= 0.0);
        }

        #[test]
        fn calibrated_matrix_validates(raw in proptest::collection::vec(0.0f64..=1.0, 10),
                                       eta in -50.0f64..50.0, tau in -50.0f64..50.0) {
            let classes = ClassSet::indexed(5).unwrap();
            let m = PairwiseScoreMatrix::new(classes, raw).unwrap();
            let mut set = CalibrationSet::new(5);
            for pair in pairs(5) {
                set.insert(CalibrationParams::with_values(pair, eta, tau)).unwrap();
            }
            let c = calibrate_matrix(&m, &set).unwrap();
            prop_assert!(validate_scores(&c.to_dense()).is_accept());
        }
    }
}
