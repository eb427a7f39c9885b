use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_points, sq_dist, MAX_ITER};
use crate::error::{Error, Result};

pub const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub wcss: f64,
    /// WCSS after each assignment step of the winning restart.
    pub wcss_log: Vec<f64>,
    pub restart: usize,
}

/// Index of the nearest centroid; ties go to the lowest index.
pub(crate) fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(points[idx].clone());
        for (di, p) in d2.iter_mut().zip(points) {
            *di = di.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn means(points: &[Vec<f64>], labels: &[usize], old: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; old.len()];
    let mut counts = vec![0usize; old.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    let centroids = sums
        .into_iter()
        .zip(&counts)
        .zip(old)
        .map(|((s, &c), o)| if c == 0 { o.clone() } else { s.into_iter().map(|v| v / c as f64).collect() })
        .collect();
    (centroids, counts)
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let mut labels: Vec<usize> = Vec::new();
    let mut log = Vec::new();
    for _ in 0..MAX_ITER {
        let mut wcss = 0.0;
        let next: Vec<usize> = points
            .iter()
            .map(|p| {
                let (j, d) = nearest(p, &centroids);
                wcss += d;
                j
            })
            .collect();
        log.push(wcss);
        if next == labels {
            break;
        }
        labels = next;
        let (mut c, counts) = means(points, &labels, &centroids);
        // Empty cluster: reseed at the point farthest from its own centroid.
        for j in 0..c.len() {
            if counts[j] == 0 {
                let far = (0..points.len())
                    .map(|i| (i, sq_dist(&points[i], &c[labels[i]])))
                    .fold((0, -1.0), |b, (i, d)| if d > b.1 { (i, d) } else { b });
                c[j] = points[far.0].clone();
            }
        }
        centroids = c;
    }
    (centroids, labels, log)
}

/// k-means++ seeding with [`KMEANS_RESTARTS`] restarts, Lloyd refinement,
/// keeping the lowest-WCSS run (earliest restart on ties).
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansFit> {
    check_points(points)?;
    if k == 0 || points.len() < k {
        return Err(Error::Argument(format!("k-means needs at least k={k} points, got {}", points.len())));
    }
    let mut best: Option<KMeansFit> = None;
    for restart in 0..KMEANS_RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let (centroids, labels, wcss_log) = lloyd(points, plus_plus(points, k, &mut rng));
        let wcss = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
        if best.as_ref().map_or(true, |b| wcss < b.wcss) {
            best = Some(KMeansFit { centroids, labels, wcss, wcss_log, restart });
        }
    }
    Ok(best.expect("at least one restart"))
}
