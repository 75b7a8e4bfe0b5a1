//! Independent reference computations used by the property and acceptance
//! tests. Nothing here calls into the solver paths it checks.

#![allow(dead_code, clippy::needless_range_loop)]

use rand::Rng;

/// `(1/2) sum_{i<j} (r_ij p_j - r_ji p_i)^2` with `r` given densely.
pub fn objective(p: &[f64], r: &[Vec<f64>]) -> f64 {
    let k = p.len();
    let mut s = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let d = r[i][j] * p[j] - r[j][i] * p[i];
            s += d * d;
        }
    }
    0.5 * s
}

/// Dense `r` from upper-triangle entries in lexicographic pair order.
pub fn dense_from_upper(k: usize, upper: &[f64]) -> Vec<Vec<f64>> {
    let mut r = vec![vec![f64::NAN; k]; k];
    let mut n = 0;
    for i in 0..k {
        for j in i + 1..k {
            r[i][j] = upper[n];
            r[j][i] = 1.0 - upper[n];
            n += 1;
        }
    }
    r
}

fn grid_search(
    r: &[Vec<f64>],
    k: usize,
    lo: &[f64],
    hi: &[f64],
    step: f64,
    best: &mut (f64, Vec<f64>),
    prefix: &mut Vec<f64>,
) {
    let used: f64 = prefix.iter().sum();
    if prefix.len() == k - 1 {
        let last = 1.0 - used;
        if last < -1e-12 {
            return;
        }
        let mut p = prefix.clone();
        p.push(last.max(0.0));
        let f = objective(&p, r);
        if f < best.0 {
            *best = (f, p);
        }
        return;
    }
    let d = prefix.len();
    let start = lo[d].max(0.0);
    let stop = hi[d].min(1.0 - used);
    let n = ((stop - start) / step + 1e-9).floor() as i64;
    for s in 0..=n.max(0) {
        let v = start + s as f64 * step;
        if v > stop + 1e-12 {
            break;
        }
        prefix.push(v);
        grid_search(r, k, lo, hi, step, best, prefix);
        prefix.pop();
    }
}

/// Exact minimization along `e_a - e_b`, using only objective evaluations.
/// The objective is quadratic along any line, so three evaluations fix it.
fn pair_refine(p: &mut [f64], r: &[Vec<f64>]) -> bool {
    let k = p.len();
    let mut improved = false;
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let f0 = objective(p, r);
            let eval = |t: f64| {
                let mut q = p.to_vec();
                q[a] += t;
                q[b] -= t;
                objective(&q, r)
            };
            let (fp, fm) = (eval(1.0), eval(-1.0));
            let alpha = 0.5 * (fp - fm);
            let beta = 0.5 * (fp + fm) - f0;
            if beta <= 0.0 {
                continue;
            }
            let t = (-alpha / (2.0 * beta)).clamp(-p[a], p[b]);
            if t == 0.0 {
                continue;
            }
            let f1 = eval(t);
            if f1 < f0 {
                p[a] += t;
                p[b] -= t;
                p[b] = p[b].max(0.0);
                improved = true;
            }
        }
    }
    improved
}

/// Grid search over the simplex followed by pairwise exact line searches.
///
/// `K <= 3` uses a full grid at the finest step; larger `K` zooms in from a
/// coarse grid, shrinking the step by 10 around the incumbent until it
/// reaches `fine_step`.
pub fn brute_force_minimum(r: &[Vec<f64>], fine_step: f64) -> (f64, Vec<f64>) {
    let k = r.len();
    let mut best = (f64::INFINITY, vec![]);
    let mut step = if k <= 3 { fine_step } else { 0.02 };
    let mut lo = vec![0.0; k];
    let mut hi = vec![1.0; k];
    loop {
        grid_search(r, k, &lo, &hi, step, &mut best, &mut Vec::with_capacity(k));
        if step <= fine_step * (1.0 + 1e-9) {
            break;
        }
        let window = 2.0 * step;
        step = (step / 10.0).max(fine_step);
        for d in 0..k {
            lo[d] = (best.1[d] - window).max(0.0);
            hi[d] = (best.1[d] + window).min(1.0);
        }
    }
    let mut p = best.1;
    for _ in 0..100_000 {
        if !pair_refine(&mut p, r) {
            break;
        }
    }
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    (objective(&p, r), p)
}

/// Double-loop indicator count; ties to the smallest index.
pub fn brute_vote(s: &[Vec<f64>]) -> (usize, Vec<usize>) {
    let k = s.len();
    let mut wins = vec![0usize; k];
    for i in 0..k {
        for j in 0..k {
            if i != j && s[i][j] > s[j][i] {
                wins[i] += 1;
            }
        }
    }
    let mut best = 0;
    for i in 1..k {
        if wins[i] > wins[best] {
            best = i;
        }
    }
    (best, wins)
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|d| {
            let mut a = x.to_vec();
            let mut b = x.to_vec();
            a[d] += h;
            b[d] -= h;
            (f(&a) - f(&b)) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Random strictly positive point of the simplex.
pub fn random_simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random calibrated upper-triangle estimates.
pub fn random_upper(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    (0..k * (k - 1) / 2).map(|_| rng.gen_range(0.001..0.999)).collect()
}
