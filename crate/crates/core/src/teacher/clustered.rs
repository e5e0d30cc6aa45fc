use rand::Rng as _;

use super::gp::{gp_fit, GpPosterior, KernelParams};
use crate::error::{invalid, FwlError, Result};
use crate::scalar::{sq_dist, Scalar};
use crate::seed;

const MAX_KMEANS_ITERS: usize = 100;

/// Result of Lloyd's algorithm: `k` centroids and the cluster of every point.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<T> {
    pub centroids: Vec<Vec<T>>,
    pub assignments: Vec<usize>,
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest<T: Scalar>(centroids: &[Vec<T>], x: &[T]) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(centroid, x);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn recompute<T: Scalar>(x: &[Vec<T>], assignments: &[usize], centroids: &mut [Vec<T>]) -> Vec<usize> {
    let m = x[0].len();
    let mut sizes = vec![0usize; centroids.len()];
    let mut sums = vec![vec![T::zero(); m]; centroids.len()];
    for (p, &c) in x.iter().zip(assignments) {
        sizes[c] += 1;
        for (s, &v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (c, sum) in sums.into_iter().enumerate() {
        if sizes[c] > 0 {
            let n = T::count(sizes[c]);
            centroids[c] = sum.into_iter().map(|s| s / n).collect();
        }
    }
    sizes
}

/// Moves the point farthest from its own centroid (taken from a cluster with
/// at least two members) into each empty cluster.
fn reseed_empty<T: Scalar>(x: &[Vec<T>], assignments: &mut [usize], centroids: &mut [Vec<T>], sizes: &mut [usize]) {
    for empty in 0..centroids.len() {
        if sizes[empty] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = T::neg_infinity();
        for (i, p) in x.iter().enumerate() {
            let c = assignments[i];
            if sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[c]);
            if d > far_d {
                far = Some(i);
                far_d = d;
            }
        }
        let i = far.expect("n >= k leaves a cluster with two members");
        sizes[assignments[i]] -= 1;
        assignments[i] = empty;
        sizes[empty] = 1;
        centroids[empty] = x[i].clone();
    }
}

/// k-means with seeded farthest-point initialisation. Every returned cluster
/// has at least one member.
pub fn kmeans<T: Scalar>(x: &[Vec<T>], k: usize, seed: u64) -> Result<KMeans<T>> {
    if k == 0 {
        return Err(invalid("cluster count must be at least 1"));
    }
    if x.len() < k {
        return Err(invalid(format!("{} points cannot fill {k} clusters", x.len())));
    }
    let m = x[0].len();
    if x.iter().any(|r| r.len() != m) {
        return Err(FwlError::ShapeMismatch("k-means inputs of unequal width".into()));
    }
    let mut centroids = vec![x[seed::rng(seed).random_range(0..x.len())].clone()];
    let mut min_d: Vec<T> = x.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let mut far = 0;
        for i in 1..x.len() {
            if min_d[i] > min_d[far] {
                far = i;
            }
        }
        centroids.push(x[far].clone());
        for (d, p) in min_d.iter_mut().zip(x) {
            *d = d.min(sq_dist(p, &x[far]));
        }
    }

    let mut assignments: Vec<usize> = x.iter().map(|p| nearest(&centroids, p)).collect();
    let mut sizes = recompute(x, &assignments, &mut centroids);
    reseed_empty(x, &mut assignments, &mut centroids, &mut sizes);
    for _ in 0..MAX_KMEANS_ITERS {
        let next: Vec<usize> = x.iter().map(|p| nearest(&centroids, p)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
        sizes = recompute(x, &assignments, &mut centroids);
        reseed_empty(x, &mut assignments, &mut centroids, &mut sizes);
    }
    recompute(x, &assignments, &mut centroids);
    Ok(KMeans { centroids, assignments })
}

/// One exact GP per k-means region; queries are routed to the nearest centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredGp<T> {
    centroids: Vec<Vec<T>>,
    members: Vec<GpPosterior<T>>,
    assignments: Vec<usize>,
}

pub fn fit_clustered<T: Scalar>(
    x: &[Vec<T>],
    y: &[T],
    k: usize,
    kp: &KernelParams,
    seed: u64,
) -> Result<ClusteredGp<T>> {
    if y.len() != x.len() {
        return Err(FwlError::ShapeMismatch(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    let km = if k == 1 && !x.is_empty() {
        let m = x[0].len();
        let mut c = vec![vec![T::zero(); m]];
        recompute(x, &vec![0; x.len()], &mut c);
        KMeans { centroids: c, assignments: vec![0; x.len()] }
    } else {
        kmeans(x, k, seed)?
    };
    let mut members = Vec::with_capacity(k);
    for c in 0..km.centroids.len() {
        let (cx, cy): (Vec<Vec<T>>, Vec<T>) = x
            .iter()
            .zip(y)
            .zip(&km.assignments)
            .filter(|(_, &a)| a == c)
            .map(|((p, &v), _)| (p.clone(), v))
            .unzip();
        members.push(gp_fit(&cx, &cy, kp)?);
    }
    Ok(ClusteredGp { centroids: km.centroids, members, assignments: km.assignments })
}

impl<T: Scalar> ClusteredGp<T> {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[Vec<T>] {
        &self.centroids
    }

    pub fn members(&self) -> &[GpPosterior<T>] {
        &self.members
    }

    /// Cluster of each training point, in input order.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn route(&self, x: &[T]) -> usize {
        nearest(&self.centroids, x)
    }

    pub fn predict(&self, x: &[T]) -> Result<(T, T)> {
        self.members[self.route(x)].predict(x)
    }
}

pub fn predict_clustered<T: Scalar>(cgp: &ClusteredGp<T>, x: &[T]) -> Result<(T, T)> {
    cgp.predict(x)
}

/// `max(1, n / 50)` clusters.
pub fn default_cluster_count(n: usize) -> usize {
    (n / 50).max(1)
}
