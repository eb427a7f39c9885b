use std::fmt;
use std::str::FromStr;

use super::{check_points, sq_dist};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Linkage {
    #[default]
    Ward,
    Average,
    Complete,
}

impl FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ward" => Ok(Linkage::Ward),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(Error::Config(format!("unknown linkage {other:?} (ward|average|complete)"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Ward => "ward",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
        })
    }
}

/// One agglomeration step: clusters in slots `a < b` merged into `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyFit {
    pub linkage: Linkage,
    pub labels: Vec<usize>,
    pub merges: Vec<Merge>,
}

/// Agglomerative clustering cut at `k` clusters.
///
/// Ward costs are the increase in within-cluster sum of squares, starting
/// from `|xi - xj|^2 / 2`; average and complete use Euclidean distance.
/// Ties merge the lexicographically smallest slot pair. Labels are numbered
/// by each cluster's smallest member index.
pub fn hierarchy_fit(points: &[Vec<f64>], k: usize, linkage: Linkage) -> Result<HierarchyFit> {
    check_points(points)?;
    let n = points.len();
    if k == 0 || n < k.max(2) {
        return Err(Error::Argument(format!("hierarchical clustering needs at least {} points, got {n}", k.max(2))));
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s = sq_dist(&points[i], &points[j]);
            let v = match linkage {
                Linkage::Ward => 0.5 * s,
                Linkage::Average | Linkage::Complete => s.sqrt(),
            };
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut owner: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - k);

    for _ in 0..n - k {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && d[i * n + j] < best.2 {
                    best = (i, j, d[i * n + j]);
                }
            }
        }
        let (a, b, cost) = best;
        if a == usize::MAX {
            return Err(Error::Numeric("no finite linkage distance left to merge".into()));
        }
        let (na, nb) = (size[a] as f64, size[b] as f64);
        for m in 0..n {
            if !active[m] || m == a || m == b {
                continue;
            }
            let (dam, dbm) = (d[a * n + m], d[b * n + m]);
            let nm = size[m] as f64;
            let v = match linkage {
                Linkage::Ward => ((na + nm) * dam + (nb + nm) * dbm - nm * cost) / (na + nb + nm),
                Linkage::Average => (na * dam + nb * dbm) / (na + nb),
                Linkage::Complete => dam.max(dbm),
            };
            d[a * n + m] = v;
            d[m * n + a] = v;
        }
        active[b] = false;
        size[a] += size[b];
        owner.iter_mut().filter(|o| **o == b).for_each(|o| *o = a);
        merges.push(Merge { a, b, cost, size: size[a] });
    }

    // A slot always holds its smallest member, so slot order is member order.
    let slots: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
    let labels = owner.iter().map(|o| slots.binary_search(o).expect("owner is active")).collect();
    Ok(HierarchyFit { linkage, labels, merges })
}
