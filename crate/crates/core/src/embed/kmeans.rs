use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::math::squared_distance;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once `|prev - cur| / prev` of the inertia falls below this.
    pub rel_tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 3, max_iter: 100, rel_tol: 1e-4 }
    }
}

/// Partition of the ID training graphs into `k` subgroups.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubgroupAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
    /// Row-major `k × dim`.
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every Lloyd update, first entry after initialization.
    pub inertia_history: Vec<f64>,
}

impl SubgroupAssignment {
    /// Member indices of cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|&(_, &l)| l == c).map(|(i, _)| i).collect()
    }
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].as_ref().to_vec()];
    let mut dist: Vec<f64> =
        points.iter().map(|p| squared_distance(p.as_ref(), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|&i| !chosen[i]).expect("n >= k")
        };
        chosen[pick] = true;
        let c = points[pick].as_ref().to_vec();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(squared_distance(p.as_ref(), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Moves the point farthest from its centroid (taken from a cluster with more
/// than one member) into each empty cluster.
fn repair_empty<P: AsRef<[f64]>>(
    points: &[P],
    labels: &mut [usize],
    centroids: &mut [Vec<f64>],
    k: usize,
) {
    loop {
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let mut far = (usize::MAX, -1.0);
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = squared_distance(p.as_ref(), &centroids[labels[i]]);
            if d > far.1 {
                far = (i, d);
            }
        }
        labels[far.0] = empty;
        centroids[empty] = points[far.0].as_ref().to_vec();
    }
}

fn update_centroids<P: AsRef<[f64]>>(points: &[P], labels: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].as_ref().len();
    let mut counts = vec![0usize; centroids.len()];
    centroids.iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x = 0.0));
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (acc, &x) in centroids[l].iter_mut().zip(p.as_ref()) {
            *acc += x;
        }
    }
    for (c, &count) in centroids.iter_mut().zip(&counts) {
        debug_assert!(count > 0 && c.len() == dim);
        c.iter_mut().for_each(|x| *x /= count as f64);
    }
}

fn inertia<P: AsRef<[f64]>>(points: &[P], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| squared_distance(p.as_ref(), &centroids[l])).sum()
}

/// Lloyd's algorithm with k-means++ seeding under Euclidean distance.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], config: &KMeansConfig, seed: u64) -> Result<SubgroupAssignment> {
    let k = config.k;
    if k == 0 {
        return Err(Error::Clustering("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Clustering(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let dim = points[0].as_ref().len();
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != dim) {
        return Err(Error::Dimension { expected: dim, found: p.as_ref().len() });
    }

    let mut rng = rng::stream(seed, rng::task::KMEANS);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;
    for _ in 0..config.max_iter.max(1) {
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest(p.as_ref(), &centroids).0;
        }
        repair_empty(points, &mut labels, &mut centroids, k);
        update_centroids(points, &labels, &mut centroids);
        let cur = inertia(points, &labels, &centroids);
        history.push(cur);
        let converged = cur == 0.0 || (prev.is_finite() && (prev - cur).abs() / prev < config.rel_tol);
        prev = cur;
        if converged {
            break;
        }
    }
    Ok(SubgroupAssignment { labels, k, centroids, inertia: prev, inertia_history: history })
}
