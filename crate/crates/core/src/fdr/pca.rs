use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Centred principal component basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `d` components, each of length `p`, by decreasing singular value.
    pub components: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub n_samples: usize,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// Variance captured by each component, `s^2 / (n - 1)`.
    pub fn explained_variance(&self) -> Vec<f64> {
        let denom = (self.n_samples - 1) as f64;
        self.singular_values.iter().map(|s| s * s / denom).collect()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x.iter().zip(&self.mean)).map(|(b, (v, m))| b * (v - m)).sum())
            .collect()
    }

    pub fn inverse_transform(&self, scores: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, s) in self.components.iter().zip(scores) {
            for (o, b) in out.iter_mut().zip(c) {
                *o += s * b;
            }
        }
        out
    }
}

pub(crate) fn check_matrix(rows: &[Vec<f64>]) -> Result<usize> {
    let p = rows.first().map_or(0, Vec::len);
    if p == 0 || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Argument("matrix rows must be non-empty and of equal length".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite matrix entry".into()));
    }
    Ok(p)
}

/// Eigenpairs of a symmetric matrix, largest eigenvalue first.
fn sorted_eigen(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = m.symmetric_eigen();
    let mut pairs: Vec<(f64, Vec<f64>)> =
        (0..eig.eigenvalues.len()).map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect())).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs
}

/// Axes from the `p x p` scatter matrix `X^T X`.
fn scatter_axes(x: &DMatrix<f64>, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    sorted_eigen(x.transpose() * x).into_iter().take(d).map(|(l, v)| (l.max(0.0).sqrt(), v)).unzip()
}

/// Axes from the `n x n` Gram matrix `X X^T`, mapped back through `X^T` and
/// re-orthonormalized (rank-deficient directions are completed from the
/// standard basis).
fn gram_axes(x: &DMatrix<f64>, d: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = x.ncols();
    let pairs = sorted_eigen(x * x.transpose());
    let top = pairs.first().map_or(0.0, |e| e.0.max(0.0));
    let mut values = Vec::with_capacity(d);
    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut spare = 0;
    for (l, u) in pairs.into_iter().take(d) {
        let l = l.max(0.0);
        let mut v: Vec<f64> = if l > 1e-20 * top {
            (x.transpose() * DVector::from_vec(u)).iter().copied().collect()
        } else {
            vec![0.0; p]
        };
        loop {
            for _ in 0..2 {
                for a in &axes {
                    let dot: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
                    v.iter_mut().zip(a).for_each(|(x, y)| *x -= dot * y);
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 * l.sqrt().max(1.0) || (norm > 0.0 && l > 1e-20 * top) {
                v.iter_mut().for_each(|x| *x /= norm);
                break;
            }
            v = vec![0.0; p];
            v[spare] = 1.0;
            spare += 1;
        }
        values.push(l.sqrt());
        axes.push(v);
    }
    (values, axes)
}

/// Fits `d` principal components of the `n x p` matrix given as rows.
pub fn fit_pca(rows: &[Vec<f64>], d: usize) -> Result<PcaModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Argument(format!("PCA needs at least 2 samples, got {n}")));
    }
    let p = check_matrix(rows)?;
    if d == 0 || d > (n - 1).min(p) {
        return Err(Error::Argument(format!("PCA dimension {d} must be in 1..={}", (n - 1).min(p))));
    }
    let mut mean = vec![0.0; p];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, p, |i, j| rows[i][j] - mean[j]);
    let (singular, mut components) = if n < p { gram_axes(&centred, d) } else { scatter_axes(&centred, d) };
    for c in &mut components {
        let pivot = c.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < 0.0 {
            c.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let singular_values = singular;
    Ok(PcaModel { mean, components, singular_values, n_samples: n })
}
