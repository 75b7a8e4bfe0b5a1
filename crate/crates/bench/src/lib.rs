//! Input generators shared by the benchmarks.

use ovo_core::{CalibrationFitData, ClassSet, PairwiseScoreMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Calibrated matrices with upper entries drawn uniformly from (0.01, 0.99).
pub fn random_matrices(k: usize, count: usize, seed: u64) -> Vec<PairwiseScoreMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = ClassSet::indexed(k).expect("k >= 2");
    (0..count)
        .map(|_| {
            let r = (0..k * (k - 1) / 2).map(|_| rng.gen_range(0.01..0.99)).collect();
            PairwiseScoreMatrix::from_calibrated(classes.clone(), r).expect("entries inside (0, 1)")
        })
        .collect()
}

/// Overlapping scores for a balanced pair of `n` samples.
pub fn calibration_data(n: usize, seed: u64) -> CalibrationFitData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|k| {
            let pos = k % 2 == 0;
            let s: f64 = if pos {
                rng.gen_range(0.3..1.0)
            } else {
                rng.gen_range(0.0..0.7)
            };
            (s, pos)
        })
        .collect();
    CalibrationFitData::new((0, 1), samples)
}
