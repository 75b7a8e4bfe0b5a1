//! Projected-gradient minimization of the coupling objective over the simplex.

use super::{build_q, finish, CouplingMethod, CouplingSolution, QMatrix};
use crate::error::Result;
use crate::types::{PairwiseScoreMatrix, ProbabilityVector};

pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_TOL: f64 = 1e-12;

/// Euclidean projection of `v` onto `{x >= 0, sum x = 1}`.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (idx, &x) in u.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (idx + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Minimizes `(1/2) p^T Q p` over the simplex starting from the uniform
/// vector, with fixed step `1/L` where `L` bounds the largest eigenvalue
/// of `Q`. Stops when one step lowers the objective by less than `tol`.
pub fn projected_gradient_coupling(m: &PairwiseScoreMatrix, max_iter: usize, tol: f64) -> Result<CouplingSolution> {
    let q = build_q(m)?;
    let p = minimize_on_simplex(&q, max_iter, tol);
    let b = -q.quadratic_form(&p);
    finish(
        m,
        &q,
        ProbabilityVector::repaired(p)?,
        b,
        CouplingMethod::ProjectedGradient,
    )
}

pub(crate) fn minimize_on_simplex(q: &QMatrix, max_iter: usize, tol: f64) -> Vec<f64> {
    let k = q.k();
    let lipschitz = (0..k)
        .map(|i| (0..k).map(|j| q.get(i, j).abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut p = vec![1.0 / k as f64; k];
    let mut f = 0.5 * q.quadratic_form(&p);
    for _ in 0..max_iter {
        let g = q.mul_vec(&p);
        let trial: Vec<f64> = p.iter().zip(&g).map(|(pi, gi)| pi - step * gi).collect();
        let next = project_to_simplex(&trial);
        let f_next = 0.5 * q.quadratic_form(&next);
        if f_next > f {
            break;
        }
        let decrease = f - f_next;
        p = next;
        f = f_next;
        if decrease < tol {
            break;
        }
    }
    p
}
