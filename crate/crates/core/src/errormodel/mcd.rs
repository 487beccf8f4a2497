//! Minimum Covariance Determinant: exhaustive search, FastMCD and the
//! one-step reweighting.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::{Error, Result};

/// Largest `n` accepted by [`mcd_exact`].
pub const MCD_EXACT_MAX_N: usize = 20;
const REWEIGHT_QUANTILE: f64 = 0.975;
const DET_REL_TOL: f64 = 1e-12;
const MAX_C_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct McdResult {
    pub location: DVector<f64>,
    /// Consistency-corrected scatter.
    pub scatter: DMatrix<f64>,
    pub h: usize,
    /// Determinant of the uncorrected covariance of the best subset.
    pub raw_determinant: f64,
    pub consistency_factor: f64,
    /// Points of the best `h`-subset, or the retained points after reweighting.
    pub support: Vec<bool>,
    pub reweighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastMcdParams {
    pub n_starts: usize,
    /// C-steps applied to every start before the best ones are refined.
    pub c_steps: usize,
    /// Number of best starts iterated to convergence.
    pub n_best: usize,
}

impl Default for FastMcdParams {
    fn default() -> Self {
        Self { n_starts: 200, c_steps: 2, n_best: 10 }
    }
}

/// Rows of `points` as a matrix, checking shape and finiteness.
fn as_matrix(points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("MCD needs at least one non-empty point".into()));
    }
    if points.iter().any(|p| p.len() != d || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidInput("MCD points must share one dimension and be finite".into()));
    }
    Ok(DMatrix::from_fn(n, d, |i, j| points[i][j]))
}

fn check_h(n: usize, d: usize, h: usize) -> Result<()> {
    let lo = (n + d + 1).div_ceil(2);
    if h < lo || h > n || h < 2 {
        return Err(Error::InvalidInput(format!("subset size {h} outside [{lo}, {n}]")));
    }
    Ok(())
}

/// `c(h/n) = (h/n) / P(chi2_{d+2} < q)` with `q` the `h/n` quantile of `chi2_d`.
pub fn consistency_factor(h: usize, n: usize, d: usize) -> f64 {
    if h >= n {
        return 1.0;
    }
    let alpha = h as f64 / n as f64;
    let q = ChiSquared::new(d as f64).expect("d > 0").inverse_cdf(alpha);
    alpha / ChiSquared::new(d as f64 + 2.0).expect("d > 0").cdf(q)
}

/// Mean and unbiased covariance of the selected rows.
fn moments(x: &DMatrix<f64>, idx: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let d = x.ncols();
    let m = idx.len() as f64;
    let mut mean = DVector::zeros(d);
    for &i in idx {
        for a in 0..d {
            mean[a] += x[(i, a)];
        }
    }
    mean /= m;
    let mut cov = DMatrix::zeros(d, d);
    let mut r = vec![0.0; d];
    for &i in idx {
        for a in 0..d {
            r[a] = x[(i, a)] - mean[a];
        }
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += r[a] * r[b];
            }
        }
    }
    cov /= (m - 1.0).max(1.0);
    (mean, cov)
}

fn finish(x: &DMatrix<f64>, idx: &[usize], h: usize) -> Result<McdResult> {
    let (n, d) = x.shape();
    let (location, cov) = moments(x, idx);
    let det = cov.determinant();
    if !(det > 0.0) {
        return Err(Error::Numerical("MCD subset covariance is singular".into()));
    }
    let factor = consistency_factor(h, n, d);
    let mut support = vec![false; n];
    for &i in idx {
        support[i] = true;
    }
    Ok(McdResult {
        location,
        scatter: cov * factor,
        h,
        raw_determinant: det,
        consistency_factor: factor,
        support,
        reweighted: false,
    })
}

/// Exhaustive search over all `h`-subsets; the reference implementation.
pub fn mcd_exact(points: &[Vec<f64>], h: usize) -> Result<McdResult> {
    let x = as_matrix(points)?;
    let (n, d) = x.shape();
    if n > MCD_EXACT_MAX_N {
        return Err(Error::InvalidInput(format!("exact MCD limited to n <= {MCD_EXACT_MAX_N}, got {n}")));
    }
    check_h(n, d, h)?;
    let mut comb: Vec<usize> = (0..h).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let det = moments(&x, &comb).1.determinant();
        if det > 0.0 && best.as_ref().is_none_or(|(b, _)| det < *b) {
            best = Some((det, comb.clone()));
        }
        // next combination in lexicographic order
        let Some(i) = (0..h).rev().find(|&i| comb[i] != i + n - h) else { break };
        comb[i] += 1;
        for j in i + 1..h {
            comb[j] = comb[j - 1] + 1;
        }
    }
    let (_, idx) = best.ok_or_else(|| Error::Numerical("every MCD subset is rank deficient".into()))?;
    finish(&x, &idx, h)
}

/// Squared Mahalanobis distances of all rows.
fn distances(x: &DMatrix<f64>, mean: &DVector<f64>, inv: &DMatrix<f64>) -> Vec<f64> {
    let d = x.ncols();
    let mut r = vec![0.0; d];
    (0..x.nrows())
        .map(|i| {
            for a in 0..d {
                r[a] = x[(i, a)] - mean[a];
            }
            let mut q = 0.0;
            for a in 0..d {
                for b in 0..d {
                    q += r[a] * inv[(a, b)] * r[b];
                }
            }
            q
        })
        .collect()
}

/// Indices of the `h` smallest distances, ties by index.
fn smallest(dist: &[f64], h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dist.len()).collect();
    let cmp = |a: &usize, b: &usize| dist[*a].total_cmp(&dist[*b]).then(a.cmp(b));
    if h < idx.len() {
        idx.select_nth_unstable_by(h, cmp);
    }
    idx.truncate(h);
    idx.sort_unstable();
    idx
}

/// One concentration step. Returns the new subset and its determinant, or
/// `None` when the current covariance is singular.
fn c_step(x: &DMatrix<f64>, idx: &[usize], h: usize) -> Option<(Vec<usize>, f64)> {
    let (mean, cov) = moments(x, idx);
    let inv = cov.try_inverse()?;
    let next = smallest(&distances(x, &mean, &inv), h);
    let det = moments(x, &next).1.determinant();
    Some((next, det))
}

fn converge(x: &DMatrix<f64>, mut idx: Vec<usize>, mut det: f64, h: usize, steps: usize) -> (Vec<usize>, f64) {
    for _ in 0..steps {
        let Some((next, nd)) = c_step(x, &idx, h) else { break };
        debug_assert!(nd <= det * (1.0 + 1e-9) + f64::MIN_POSITIVE);
        if next == idx || nd >= det {
            if nd < det {
                return (next, nd);
            }
            break;
        }
        idx = next;
        det = nd;
    }
    (idx, det)
}

/// FastMCD: random `(d+1)`-subsets, concentration steps, best starts refined
/// to convergence.
pub fn fast_mcd(points: &[Vec<f64>], h: usize, seed: u64, params: &FastMcdParams) -> Result<McdResult> {
    let x = as_matrix(points)?;
    let (n, d) = x.shape();
    if n <= d {
        return Err(Error::InvalidInput(format!("fast MCD needs n > d, got n = {n}, d = {d}")));
    }
    check_h(n, d, h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<(f64, Vec<usize>)> = Vec::new();
    for _ in 0..params.n_starts.max(1) {
        let mut start: Vec<usize> = sample_indices(&mut rng, n, d + 1).into_vec();
        // grow the start until its covariance is invertible
        while moments(&x, &start).1.determinant() <= 0.0 && start.len() < n {
            let extra = loop {
                let c = rand::Rng::random_range(&mut rng, 0..n);
                if !start.contains(&c) {
                    break c;
                }
            };
            start.push(extra);
        }
        let (mean, cov) = moments(&x, &start);
        let Some(inv) = cov.try_inverse() else { continue };
        let idx = smallest(&distances(&x, &mean, &inv), h);
        let det = moments(&x, &idx).1.determinant();
        if !(det > 0.0) {
            continue;
        }
        let (idx, det) = converge(&x, idx, det, h, params.c_steps);
        candidates.push((det, idx));
    }
    if candidates.is_empty() {
        return Err(Error::Numerical("all FastMCD starts were degenerate".into()));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    candidates.dedup_by(|a, b| a.1 == b.1);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for (det, idx) in candidates.into_iter().take(params.n_best.max(1)) {
        let (idx, det) = converge(&x, idx, det, h, MAX_C_STEPS);
        if best.as_ref().is_none_or(|(b, _)| det < *b * (1.0 - DET_REL_TOL)) {
            best = Some((det, idx));
        }
    }
    let (_, idx) = best.expect("at least one candidate");
    finish(&x, &idx, h)
}

/// One-step reweighting: keep points within the 97.5% chi-square distance of
/// the raw fit, re-estimate and rescale. Returns the raw result when `h = n`.
pub fn reweight(points: &[Vec<f64>], raw: &McdResult) -> Result<McdResult> {
    let x = as_matrix(points)?;
    let (n, d) = x.shape();
    if raw.h >= n {
        return Ok(raw.clone());
    }
    let inv = raw
        .scatter
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("MCD scatter is singular".into()))?;
    let q = ChiSquared::new(d as f64).expect("d > 0").inverse_cdf(REWEIGHT_QUANTILE);
    let dist = distances(&x, &raw.location, &inv);
    let keep: Vec<usize> = (0..n).filter(|&i| dist[i] <= q).collect();
    if keep.len() <= d {
        return Ok(raw.clone());
    }
    let (location, cov) = moments(&x, &keep);
    let factor = REWEIGHT_QUANTILE / ChiSquared::new(d as f64 + 2.0).expect("d > 0").cdf(q);
    let mut support = vec![false; n];
    for &i in &keep {
        support[i] = true;
    }
    Ok(McdResult {
        location,
        scatter: cov * factor,
        h: raw.h,
        raw_determinant: raw.raw_determinant,
        consistency_factor: factor,
        support,
        reweighted: true,
    })
}
