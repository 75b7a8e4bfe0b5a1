//! Joint class probabilities from calibrated pairwise estimates.
//!
//! The coupled vector `p` minimizes
//! `(1/2) sum_{i<j} (r_ij p_j - r_ji p_i)^2` over the simplex. Dropping the
//! nonnegativity constraint leaves an equality-constrained QP whose KKT
//! conditions form the bordered system
//!
//! ```text
//! [ Q   e ] [p]   [0]
//! [ e^T 0 ] [b] = [1]
//! ```
//!
//! with `Q_ii = sum_{s != i} r_si^2` and `Q_ij = -r_ji r_ij`. Tiny negative
//! entries of the KKT solution are clamped; larger ones hand the problem to
//! [`projected_gradient_coupling`].

mod labels;
pub mod linalg;
mod projected;

pub use labels::{argmax_label, threshold_labels, vote_label, VoteOutcome};
pub use projected::{project_to_simplex, projected_gradient_coupling, DEFAULT_MAX_ITER, DEFAULT_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{OvoError, Result};
use crate::types::{pairs, CouplingWeights, PairwiseScoreMatrix, ProbabilityVector};

/// KKT entries above this negative level are clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-9;

const KKT_RIDGE: f64 = 1e-12;

/// How a [`CouplingSolution`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMethod {
    Kkt,
    ProjectedGradient,
    Repaired,
}

impl std::fmt::Display for CouplingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CouplingMethod::Kkt => "kkt",
            CouplingMethod::ProjectedGradient => "projected_gradient",
            CouplingMethod::Repaired => "repaired",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSolution {
    pub p: ProbabilityVector,
    /// Lagrange multiplier of the sum-to-one constraint.
    pub b: f64,
    pub method: CouplingMethod,
    pub quadratic_objective: f64,
    /// `||Q p + b e||_inf`.
    pub residual_norm: f64,
}

/// Symmetric K×K matrix of the coupling QP, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl QMatrix {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.k)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `v^T Q v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

fn calibrated_or_err(m: &PairwiseScoreMatrix) -> Result<&[f64]> {
    // report the first pair: nothing is calibrated
    m.calibrated_upper().ok_or(OvoError::MissingCalibration(0, 1))
}

/// Builds `Q` from the calibrated estimates of `m`.
pub fn build_q(m: &PairwiseScoreMatrix) -> Result<QMatrix> {
    let r = calibrated_or_err(m)?;
    let k = m.k();
    let mut entries = vec![0.0; k * k];
    for ((i, j), &r_ij) in pairs(k).zip(r) {
        let r_ji = 1.0 - r_ij;
        // diagonal: Q_ii collects r_si^2 over s != i
        entries[i * k + i] += r_ji * r_ji;
        entries[j * k + j] += r_ij * r_ij;
        let off = -r_ji * r_ij;
        entries[i * k + j] = off;
        entries[j * k + i] = off;
    }
    Ok(QMatrix { k, entries })
}

/// `(1/2) sum_{i<j} (r_ij p_j - r_ji p_i)^2`.
pub fn quadratic_objective(p: &ProbabilityVector, m: &PairwiseScoreMatrix) -> Result<f64> {
    let r = calibrated_or_err(m)?;
    if p.len() != m.k() {
        return Err(OvoError::Shape {
            expected: m.k(),
            actual: p.len(),
        });
    }
    Ok(objective_sum(p.values(), m.k(), r))
}

pub(crate) fn objective_sum(p: &[f64], k: usize, r: &[f64]) -> f64 {
    0.5 * pairs(k)
        .zip(r)
        .map(|((i, j), &r_ij)| {
            let d = r_ij * p[j] - (1.0 - r_ij) * p[i];
            d * d
        })
        .sum::<f64>()
}

/// Weighted pairwise KL divergence `sum_{i != j} n_ij r_ij ln(r_ij / mu_ij)`.
///
/// Returns `f64::INFINITY` when some `mu_ij` vanishes while `r_ij > 0`.
pub fn kl_objective(p: &ProbabilityVector, m: &PairwiseScoreMatrix, w: &CouplingWeights) -> Result<f64> {
    calibrated_or_err(m)?;
    let k = m.k();
    if p.len() != k || w.k() != k {
        return Err(OvoError::Shape {
            expected: k,
            actual: if p.len() != k { p.len() } else { w.k() },
        });
    }
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let r = m.calibrated(i, j).expect("calibrated");
            if r == 0.0 {
                continue;
            }
            let denom = p.get(i) + p.get(j);
            let mu = if denom > 0.0 { p.get(i) / denom } else { 0.0 };
            if mu == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += w.get(i, j) * r * (r / mu).ln();
        }
    }
    Ok(total)
}

fn solve_kkt(q: &QMatrix, ridge: f64) -> Option<(Vec<f64>, f64)> {
    let k = q.k();
    let n = k + 1;
    let mut a = vec![0.0; n * n];
    for i in 0..k {
        for j in 0..k {
            a[i * n + j] = q.get(i, j);
        }
        a[i * n + i] += ridge;
        a[i * n + k] = 1.0;
        a[k * n + i] = 1.0;
    }
    let mut rhs = vec![0.0; n];
    rhs[k] = 1.0;
    let mut x = linalg::solve_dense(a, n, rhs)?;
    let b = x.pop()?;
    Some((x, b))
}

pub(crate) fn finish(
    m: &PairwiseScoreMatrix,
    q: &QMatrix,
    p: ProbabilityVector,
    b: f64,
    method: CouplingMethod,
) -> Result<CouplingSolution> {
    let qp = q.mul_vec(p.values());
    let residual_norm = qp.iter().map(|v| (v + b).abs()).fold(0.0, f64::max);
    let quadratic_objective = quadratic_objective(&p, m)?;
    Ok(CouplingSolution {
        p,
        b,
        method,
        quadratic_objective,
        residual_norm,
    })
}

/// Couples the calibrated estimates of `m` into a class-probability vector.
pub fn solve_coupling(m: &PairwiseScoreMatrix) -> Result<CouplingSolution> {
    let q = build_q(m)?;
    let (p, b) = solve_kkt(&q, 0.0).or_else(|| solve_kkt(&q, KKT_RIDGE)).ok_or_else(|| {
        OvoError::DegenerateCoupling(format!(
            "singular KKT system for {} classes even with ridge {KKT_RIDGE:e}",
            q.k()
        ))
    })?;

    let min = p.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVE_CLAMP {
        log::debug!("KKT solution has entry {min:e}; falling back to projected gradient");
        return projected_gradient_coupling(m, DEFAULT_MAX_ITER, DEFAULT_TOL);
    }
    let (method, p) = if min < 0.0 {
        (CouplingMethod::Repaired, ProbabilityVector::repaired(p)?)
    } else {
        let sum: f64 = p.iter().sum();
        let p = if (sum - 1.0).abs() > crate::types::SIMPLEX_TOL {
            p.into_iter().map(|v| v / sum).collect()
        } else {
            p
        };
        (CouplingMethod::Kkt, ProbabilityVector::new(p)?)
    };
    finish(m, &q, p, b, method)
}
