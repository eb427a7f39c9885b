//! Two-way clustering of reduced representations and the cluster-to-grade map.

mod gmm;
mod hierarchy;
mod kmeans;

use std::fmt;
use std::str::FromStr;

pub use self::gmm::{gmm_fit, GmmFit, GMM_RIDGE, GMM_TOL};
pub use self::hierarchy::{hierarchy_fit, HierarchyFit, Linkage, Merge};
pub use self::kmeans::{kmeans_fit, KMeansFit, KMEANS_RESTARTS};

use crate::dataset::QualityGrade;
use crate::error::{Error, Result};

/// Iteration cap shared by Lloyd and EM.
pub const MAX_ITER: usize = 10_000;
pub const N_CLUSTERS: usize = 2;

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_points(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map_or(0, Vec::len);
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Argument("points must be non-empty with equal, non-zero dimension".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite point coordinate".into()));
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ClusterMethod {
    Kmeans,
    #[default]
    Hierarchy,
    Gmm,
}

impl FromStr for ClusterMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(ClusterMethod::Kmeans),
            "hierarchy" => Ok(ClusterMethod::Hierarchy),
            "gmm" => Ok(ClusterMethod::Gmm),
            other => Err(Error::Config(format!("unknown cluster method {other:?} (kmeans|hierarchy|gmm)"))),
        }
    }
}

impl fmt::Display for ClusterMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterMethod::Kmeans => "kmeans",
            ClusterMethod::Hierarchy => "hierarchy",
            ClusterMethod::Gmm => "gmm",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClusterModel {
    Kmeans(KMeansFit),
    Hierarchy(HierarchyFit),
    Gmm(GmmFit),
}

impl ClusterModel {
    pub fn fit(method: ClusterMethod, linkage: Linkage, points: &[Vec<f64>], seed: u64) -> Result<Self> {
        Ok(match method {
            ClusterMethod::Kmeans => ClusterModel::Kmeans(kmeans_fit(points, N_CLUSTERS, seed)?),
            ClusterMethod::Hierarchy => ClusterModel::Hierarchy(hierarchy_fit(points, N_CLUSTERS, linkage)?),
            ClusterMethod::Gmm => ClusterModel::Gmm(gmm_fit(points, N_CLUSTERS, seed)?),
        })
    }

    pub fn method(&self) -> ClusterMethod {
        match self {
            ClusterModel::Kmeans(_) => ClusterMethod::Kmeans,
            ClusterModel::Hierarchy(_) => ClusterMethod::Hierarchy,
            ClusterModel::Gmm(_) => ClusterMethod::Gmm,
        }
    }

    pub fn labels(&self) -> &[usize] {
        match self {
            ClusterModel::Kmeans(f) => &f.labels,
            ClusterModel::Hierarchy(f) => &f.labels,
            ClusterModel::Gmm(f) => &f.labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradeEntry {
    pub id: String,
    pub score: f64,
    pub cluster: usize,
    pub grade: QualityGrade,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradeAssignment {
    pub entries: Vec<GradeEntry>,
}

/// Maps the two clusters to Gradable/Ungradable. The cluster with the higher
/// mean score is Ungradable; on equal means, the one with the larger mean
/// distance to the pooled centroid.
pub fn assign_grades(labels: &[usize], points: &[Vec<f64>], ids: &[String], scores: &[f64]) -> Result<GradeAssignment> {
    let n = labels.len();
    if points.len() != n || ids.len() != n || scores.len() != n {
        return Err(Error::Argument(format!(
            "assign_grades length mismatch: {n} labels, {} points, {} ids, {} scores",
            points.len(),
            ids.len(),
            scores.len()
        )));
    }
    let dim = check_points(points)?;
    let mut count = [0usize; N_CLUSTERS];
    let mut score_sum = [0.0; N_CLUSTERS];
    for (&l, &s) in labels.iter().zip(scores) {
        if l >= N_CLUSTERS {
            return Err(Error::Assignment(format!("cluster index {l} out of range")));
        }
        count[l] += 1;
        score_sum[l] += s;
    }
    if let Some(empty) = count.iter().position(|&c| c == 0) {
        return Err(Error::Assignment(format!("cluster {empty} is empty")));
    }
    let mean_score = [score_sum[0] / count[0] as f64, score_sum[1] / count[1] as f64];
    let ungradable = if mean_score[0] != mean_score[1] {
        usize::from(mean_score[1] > mean_score[0])
    } else {
        let mut centroid = vec![0.0; dim];
        for p in points {
            centroid.iter_mut().zip(p).for_each(|(c, v)| *c += v / n as f64);
        }
        let mut spread = [0.0; N_CLUSTERS];
        for (p, &l) in points.iter().zip(labels) {
            spread[l] += sq_dist(p, &centroid).sqrt() / count[l] as f64;
        }
        usize::from(spread[1] > spread[0])
    };
    let entries = labels
        .iter()
        .zip(ids)
        .zip(scores)
        .map(|((&cluster, id), &score)| GradeEntry {
            id: id.clone(),
            score,
            cluster,
            grade: if cluster == ungradable { QualityGrade::Ungradable } else { QualityGrade::Gradable },
        })
        .collect();
    Ok(GradeAssignment { entries })
}
