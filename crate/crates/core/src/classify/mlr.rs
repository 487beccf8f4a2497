//! L2-penalized multinomial logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;
const GRAD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlrModel {
    pub lambda: f64,
    /// classes x features
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl MlrModel {
    pub fn zeros(classes: usize, features: usize, lambda: f64) -> Self {
        Self {
            lambda,
            weights: vec![vec![0.0; features]; classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    fn from_params(p: &[f64], k: usize, d: usize, lambda: f64) -> Self {
        Self {
            lambda,
            weights: (0..k).map(|c| p[c * d..(c + 1) * d].to_vec()).collect(),
            bias: p[k * d..].to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MlrFit {
    pub model: MlrModel,
    /// Objective value after every accepted step, starting from zero weights.
    pub loss_history: Vec<f64>,
    pub converged: bool,
}

/// Mean softmax cross-entropy plus `lambda/2 ||W||^2` (bias unpenalized) and
/// its gradient. `params` holds the `k x d` weights row-major then `k` biases.
pub fn loss_and_gradient(params: &[f64], x: &DMatrix<f64>, y: &[usize], k: usize, lambda: f64) -> (f64, Vec<f64>) {
    let (n, d) = x.shape();
    debug_assert_eq!(params.len(), k * d + k);
    let w = DMatrix::from_row_slice(k, d, &params[..k * d]);
    let b = DVector::from_column_slice(&params[k * d..]);
    let mut s = x * w.transpose();
    let mut loss = 0.0;
    for i in 0..n {
        let mut row = s.row_mut(i);
        row += b.transpose();
        let m = row.max();
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[y[i]];
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
        row[y[i]] -= 1.0;
    }
    let inv_n = 1.0 / n as f64;
    loss = loss * inv_n + 0.5 * lambda * w.norm_squared();
    let gw = (s.transpose() * x) * inv_n + &w * lambda;
    let mut grad = Vec::with_capacity(k * d + k);
    for c in 0..k {
        grad.extend(gw.row(c).iter());
    }
    for c in 0..k {
        grad.push(s.column(c).sum() * inv_n);
    }
    (loss, grad)
}

/// Full-batch gradient descent with Barzilai-Borwein steps safeguarded by a
/// monotone Armijo backtracking line search.
pub fn fit(x: &DMatrix<f64>, y: &[usize], k: usize, lambda: f64, max_iter: usize) -> Result<MlrFit> {
    let d = x.ncols();
    if y.len() != x.nrows() || y.is_empty() {
        return Err(Error::InvalidInput("feature matrix and labels disagree".into()));
    }
    let mut p = vec![0.0; k * d + k];
    let (mut f, mut g) = loss_and_gradient(&p, x, y, k, lambda);
    let mut history = vec![f];
    let mut alpha = 1.0;
    let mut converged = false;
    for _ in 0..max_iter {
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if g2.sqrt() < GRAD_TOL {
            converged = true;
            break;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let cand: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
            let (fc, gc) = loss_and_gradient(&cand, x, y, k, lambda);
            if !fc.is_finite() {
                alpha *= 0.5;
                continue;
            }
            if fc <= f - ARMIJO_C * alpha * g2 {
                accepted = Some((cand, fc, gc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            converged = true;
            break;
        };
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..p.len() {
            let s = cand[i] - p[i];
            ss += s * s;
            sy += s * (gc[i] - g[i]);
        }
        alpha = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { 1.0 };
        debug_assert!(fc <= f);
        p = cand;
        f = fc;
        g = gc;
        history.push(f);
    }
    if !f.is_finite() {
        return Err(Error::Numerical("logistic regression loss is not finite".into()));
    }
    Ok(MlrFit {
        model: MlrModel::from_params(&p, k, d, lambda),
        loss_history: history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> (DMatrix<f64>, Vec<usize>) {
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0));
        let y = (0..n).map(|i| i % k).collect();
        (x, y)
    }

    // Direct evaluation of the objective from its definition.
    fn objective_oracle(p: &[f64], x: &DMatrix<f64>, y: &[usize], k: usize, lambda: f64) -> f64 {
        let d = x.ncols();
        let mut total = 0.0;
        for i in 0..x.nrows() {
            let s: Vec<f64> = (0..k)
                .map(|c| p[k * d + c] + (0..d).map(|j| p[c * d + j] * x[(i, j)]).sum::<f64>())
                .collect();
            let z: f64 = s.iter().map(|v| v.exp()).sum();
            total += -(s[y[i]].exp() / z).ln();
        }
        total / x.nrows() as f64 + 0.5 * lambda * p[..k * d].iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (n, d, k) = (rng.random_range(5..30), rng.random_range(1..5), rng.random_range(2..5));
            let (x, y) = random_problem(&mut rng, n, d, k);
            let lambda = rng.random_range(0.0..1.0);
            let p: Vec<f64> = (0..k * d + k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (f, g) = loss_and_gradient(&p, &x, &y, k, lambda);
            assert!((f - objective_oracle(&p, &x, &y, k, lambda)).abs() < 1e-12 * f.max(1.0));
            let h = 1e-5;
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for i in 0..p.len() {
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (objective_oracle(&a, &x, &y, k, lambda) - objective_oracle(&b, &x, &y, k, lambda)) / (2.0 * h);
                num += (fd - g[i]).powi(2);
                den = den.max(g[i].abs()).max(fd.abs());
            }
            assert!(num.sqrt() / den.max(1e-12) < 1e-5);
        }
    }

    #[test]
    fn separable_clusters_and_monotone_loss() {
        let mut x = DMatrix::zeros(40, 2);
        let mut y = vec![0; 40];
        for i in 0..40 {
            let c = i % 2;
            x[(i, 0)] = if c == 0 { -2.0 } else { 2.0 } + 0.1 * (i as f64).sin();
            x[(i, 1)] = (i as f64).cos();
            y[i] = c;
        }
        let fit = fit(&x, &y, 2, 1e-6, 300).unwrap();
        assert!(fit.loss_history.windows(2).all(|w| w[1] <= w[0]));
        let correct = (0..40)
            .filter(|&i| {
                let s = fit.model.scores(&[x[(i, 0)], x[(i, 1)]]);
                (s[1] > s[0]) as usize == y[i]
            })
            .count();
        assert_eq!(correct, 40);
    }

    #[test]
    fn huge_penalty_shrinks_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, mut y) = random_problem(&mut rng, 30, 3, 3);
        for v in y.iter_mut().take(15) {
            *v = 2;
        }
        let fit = fit(&x, &y, 3, 1e9, 200).unwrap();
        assert!(fit.model.weights.iter().flatten().all(|w| w.abs() < 1e-6));
        let s = fit.model.scores(&[0.3, -0.2, 0.1]);
        let best = (0..3).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
        assert_eq!(best, 2);
    }
}
