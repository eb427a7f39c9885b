//! Frobenius-norm NMF with Lee-Seung multiplicative updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pca::check_matrix;
use crate::error::{Error, Result};

pub const NMF_EPS: f64 = 1e-12;
pub const NMF_TRANSFORM_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmfConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig { max_iter: 10_000, tol: 1e-5, seed: 0 }
    }
}

/// Basis `W` (`p x d`, stored row-major) and the global shift added before factorizing.
#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    pub basis: Vec<f64>,
    pub n_features: usize,
    pub dim: usize,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfFit {
    pub model: NmfModel,
    /// Per-sample coefficients `H` (`n x d`, row-major).
    pub coefficients: Vec<f64>,
    /// `||X - H W^T||_F^2` after every iteration.
    pub objective: Vec<f64>,
}

fn objective(x: &[f64], h: &[f64], w: &[f64], n: usize, p: usize, d: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let hi = &h[i * d..(i + 1) * d];
        for j in 0..p {
            let wj = &w[j * d..(j + 1) * d];
            let r = x[i * p + j] - hi.iter().zip(wj).map(|(a, b)| a * b).sum::<f64>();
            total += r * r;
        }
    }
    total
}

/// `d x d` Gram matrix `A^T A` of a row-major `m x d` matrix.
fn gram(a: &[f64], m: usize, d: usize) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for r in 0..m {
        let row = &a[r * d..(r + 1) * d];
        for i in 0..d {
            for j in 0..d {
                g[i * d + j] += row[i] * row[j];
            }
        }
    }
    g
}

/// Factorizes `rows + shift ~ H W^T` with non-negative `H`, `W`.
pub fn fit_nmf(rows: &[Vec<f64>], d: usize, cfg: &NmfConfig) -> Result<NmfFit> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Argument(format!("NMF needs at least 2 samples, got {n}")));
    }
    let p = check_matrix(rows)?;
    if d == 0 || d > n.min(p) {
        return Err(Error::Argument(format!("NMF dimension {d} must be in 1..={}", n.min(p))));
    }
    let min = rows.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let shift = (-min).max(0.0);
    let x: Vec<f64> = rows.iter().flatten().map(|v| v + shift).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::Degenerate("shifted NMF input is all zero".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = (mean / d as f64).sqrt();
    let mut h: Vec<f64> = (0..n * d).map(|_| scale * rng.gen::<f64>()).collect();
    let mut w: Vec<f64> = (0..p * d).map(|_| scale * rng.gen::<f64>()).collect();

    let mut log = Vec::new();
    let mut prev = objective(&x, &h, &w, n, p, d);
    for _ in 0..cfg.max_iter {
        // H <- H * (X W) / (H W^T W)
        let wtw = gram(&w, p, d);
        for i in 0..n {
            let mut num = vec![0.0; d];
            for j in 0..p {
                let xij = x[i * p + j];
                if xij != 0.0 {
                    for (k, nk) in num.iter_mut().enumerate() {
                        *nk += xij * w[j * d + k];
                    }
                }
            }
            let hi: Vec<f64> = h[i * d..(i + 1) * d].to_vec();
            for k in 0..d {
                let den: f64 = (0..d).map(|l| hi[l] * wtw[l * d + k]).sum();
                h[i * d + k] = hi[k] * num[k] / (den + NMF_EPS);
            }
        }
        // W <- W * (X^T H) / (W H^T H)
        let hth = gram(&h, n, d);
        let mut num = vec![0.0; p * d];
        for i in 0..n {
            let hi = &h[i * d..(i + 1) * d];
            for j in 0..p {
                let xij = x[i * p + j];
                if xij != 0.0 {
                    for k in 0..d {
                        num[j * d + k] += xij * hi[k];
                    }
                }
            }
        }
        for j in 0..p {
            let wj: Vec<f64> = w[j * d..(j + 1) * d].to_vec();
            for k in 0..d {
                let den: f64 = (0..d).map(|l| wj[l] * hth[l * d + k]).sum();
                w[j * d + k] = wj[k] * num[j * d + k] / (den + NMF_EPS);
            }
        }
        let cur = objective(&x, &h, &w, n, p, d);
        if !cur.is_finite() {
            return Err(Error::Numeric("NMF objective became non-finite".into()));
        }
        log.push(cur);
        let rel = (prev - cur).abs() / prev.max(f64::MIN_POSITIVE);
        prev = cur;
        if rel < cfg.tol {
            break;
        }
    }
    Ok(NmfFit { model: NmfModel { basis: w, n_features: p, dim: d, shift }, coefficients: h, objective: log })
}

impl NmfModel {
    /// Non-negative coefficients of one sample against the fixed basis, by
    /// [`NMF_TRANSFORM_ITERS`] multiplicative updates from a constant start.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let (p, d) = (self.n_features, self.dim);
        let x: Vec<f64> = row.iter().map(|v| (v + self.shift).max(0.0)).collect();
        let mean = x.iter().sum::<f64>() / p as f64;
        let wtw = gram(&self.basis, p, d);
        let mut wtx = vec![0.0; d];
        for j in 0..p {
            for k in 0..d {
                wtx[k] += self.basis[j * d + k] * x[j];
            }
        }
        let mut h = vec![(mean / d as f64).sqrt().max(1e-3); d];
        for _ in 0..NMF_TRANSFORM_ITERS {
            let prev = h.clone();
            for k in 0..d {
                let den: f64 = (0..d).map(|l| prev[l] * wtw[l * d + k]).sum();
                h[k] = prev[k] * wtx[k] / (den + NMF_EPS);
            }
        }
        h
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..self.n_features)
            .map(|j| self.basis[j * d..(j + 1) * d].iter().zip(coeffs).map(|(a, b)| a * b).sum::<f64>() - self.shift)
            .collect()
    }
}
