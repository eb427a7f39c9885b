//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Sample covariance (divisor n - 1).
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let p = rows[0].len();
    let mean: Vec<f64> = (0..p).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; p]; p];
    for r in rows {
        for i in 0..p {
            for j in 0..p {
                c[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    c.iter_mut().flatten().for_each(|v| *v /= (n - 1) as f64);
    c
}

fn sse(points: &[&Vec<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let d = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    points.iter().map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum()
}

/// Minimum within-cluster sum of squares over every split into two non-empty groups.
pub fn exhaustive_two_partition_wcss(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for mask in 1..(1u32 << n) - 1 {
        let (a, b): (Vec<_>, Vec<_>) = (0..n).partition(|&i| mask >> i & 1 == 1);
        let a: Vec<&Vec<f64>> = a.iter().map(|&i| &points[i]).collect();
        let b: Vec<&Vec<f64>> = b.iter().map(|&i| &points[i]).collect();
        best = best.min(sse(&a) + sse(&b));
    }
    best
}

/// Naive Ward agglomeration: recompute every pairwise merge cost from the
/// cluster members at each step. Returns labels numbered by smallest member.
pub fn naive_ward_labels(points: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let merged: Vec<&Vec<f64>> = clusters[a].iter().chain(&clusters[b]).map(|&i| &points[i]).collect();
                let pa: Vec<&Vec<f64>> = clusters[a].iter().map(|&i| &points[i]).collect();
                let pb: Vec<&Vec<f64>> = clusters[b].iter().map(|&i| &points[i]).collect();
                let cost = sse(&merged) - sse(&pa) - sse(&pb);
                if cost < best.0 {
                    best = (cost, a, b);
                }
            }
        }
        let moved = clusters.remove(best.2);
        clusters[best.1].extend(moved);
    }
    clusters.iter_mut().for_each(|c| c.sort_unstable());
    clusters.sort_by_key(|c| c[0]);
    let mut labels = vec![0; points.len()];
    for (l, c) in clusters.iter().enumerate() {
        for &i in c {
            labels[i] = l;
        }
    }
    labels
}

/// Canonical form of a labelling: clusters renumbered by first appearance.
pub fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Best F1 over every cut at or between the given scores, computed by direct counting.
pub fn exhaustive_best_f1(scores: &[f64], positive: &[bool]) -> f64 {
    let mut cuts: Vec<f64> = scores.to_vec();
    cuts.push(f64::NEG_INFINITY);
    for a in scores {
        for b in scores {
            cuts.push(0.5 * (a + b));
        }
    }
    cuts.iter()
        .map(|&t| {
            let tp = scores.iter().zip(positive).filter(|(s, p)| **s > t && **p).count();
            let predicted = scores.iter().filter(|s| **s > t).count();
            let actual = positive.iter().filter(|p| **p).count();
            if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (predicted + actual) as f64
            }
        })
        .fold(0.0, f64::max)
}

/// Kappa in percent from disagreement weights: 1 - sum(w * observed) / sum(w * expected).
pub fn kappa_by_disagreement(counts: &[Vec<u64>]) -> f64 {
    let k = counts.len();
    let n: f64 = counts.iter().flatten().sum::<u64>() as f64;
    let rows: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let cols: Vec<f64> = (0..k).map(|j| counts.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    let (mut obs, mut exp) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                obs += counts[i][j] as f64 / n;
                exp += rows[i] * cols[j] / (n * n);
            }
        }
    }
    (1.0 - obs / exp) * 100.0
}
