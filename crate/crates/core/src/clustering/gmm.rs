use nalgebra::{DMatrix, DVector};

use super::kmeans::kmeans_fit;
use super::{check_points, MAX_ITER};
use crate::error::{Error, Result};

pub const GMM_RIDGE: f64 = 1e-6;
pub const GMM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d x d` covariance per component.
    pub covariances: Vec<Vec<f64>>,
    pub responsibilities: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Total data log-likelihood after each kept E-step.
    pub ll_log: Vec<f64>,
}

struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

fn component(weight: f64, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Component> {
    let d = mean.len() as f64;
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("GMM covariance is not positive definite".into()))?
        .unpack();
    let log_det: f64 = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(Component {
        log_weight: weight.ln(),
        mean: mean.clone(),
        chol,
        log_norm: -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det),
    })
}

impl Component {
    fn log_joint(&self, x: &DVector<f64>) -> f64 {
        let diff = x - &self.mean;
        let y = self.chol.solve_lower_triangular(&diff).expect("Cholesky factor has a positive diagonal");
        self.log_weight + self.log_norm - 0.5 * y.norm_squared()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Full-covariance EM seeded from k-means centroids, with a shared pooled
/// covariance and uniform weights as the starting point.
pub fn gmm_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmFit> {
    let dim = check_points(points)?;
    let n = points.len();
    if n <= dim {
        log::warn!("GMM with n={n} <= d={dim}: covariances are dominated by the ridge");
    }
    let km = kmeans_fit(points, k, seed)?;
    let xs: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
    let ridge = DMatrix::identity(dim, dim) * GMM_RIDGE;

    let pooled_mean = xs.iter().fold(DVector::zeros(dim), |a, x| a + x) / n as f64;
    let pooled = xs.iter().fold(DMatrix::zeros(dim, dim), |a, x| {
        let c = x - &pooled_mean;
        a + &c * c.transpose()
    }) / n as f64
        + &ridge;

    let mut weights = vec![1.0 / k as f64; k];
    let mut means: Vec<DVector<f64>> = km.centroids.iter().map(|c| DVector::from_column_slice(c)).collect();
    let mut covs = vec![pooled; k];
    let mut resp = vec![vec![0.0; k]; n];
    let mut ll_log: Vec<f64> = Vec::new();
    let mut previous = None;

    for _ in 0..MAX_ITER {
        let comps = (0..k).map(|j| component(weights[j], &means[j], &covs[j])).collect::<Result<Vec<_>>>()?;
        let mut ll = 0.0;
        for (x, r) in xs.iter().zip(resp.iter_mut()) {
            let lj: Vec<f64> = comps.iter().map(|c| c.log_joint(x)).collect();
            let lse = log_sum_exp(&lj);
            ll += lse;
            for (rj, l) in r.iter_mut().zip(&lj) {
                *rj = (l - lse).exp();
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numeric(format!("GMM log-likelihood became {ll}")));
        }
        if let Some(&prev) = ll_log.last() {
            // The ridge makes the M-step inexact, so a final step can lose a
            // little likelihood; keep the previous state in that case.
            if ll < prev {
                (weights, means, covs, resp) = previous.take().expect("state saved before every M-step");
                break;
            }
            if ll - prev < GMM_TOL {
                ll_log.push(ll);
                break;
            }
        }
        ll_log.push(ll);
        previous = Some((weights.clone(), means.clone(), covs.clone(), resp.clone()));
        for j in 0..k {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            if nk <= 0.0 {
                weights[j] = 0.0;
                covs[j] = ridge.clone();
                continue;
            }
            weights[j] = nk / n as f64;
            let mu = xs.iter().zip(&resp).fold(DVector::zeros(dim), |a, (x, r)| a + x * r[j]) / nk;
            let cov = xs.iter().zip(&resp).fold(DMatrix::zeros(dim, dim), |a, (x, r)| {
                let c = x - &mu;
                a + (&c * c.transpose()) * r[j]
            }) / nk;
            // Symmetrize against rounding before the ridge.
            covs[j] = (&cov + cov.transpose()) * 0.5 + &ridge;
            means[j] = mu;
        }
    }

    let labels = resp
        .iter()
        .map(|r| r.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b }).0)
        .collect();
    Ok(GmmFit {
        weights,
        means: means.iter().map(|m| m.iter().copied().collect()).collect(),
        covariances: covs.iter().map(|c| c.transpose().iter().copied().collect()).collect(),
        responsibilities: resp,
        labels,
        ll_log,
    })
}
