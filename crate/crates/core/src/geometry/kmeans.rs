//! Seeded k-means++ with Lloyd iterations.

use rand::Rng as _;

use super::GeometryError;
use crate::embed::EmbeddingMatrix;
use crate::rng;
use crate::scalar::Scalar;

pub const KMEANS_MAX_ITERATIONS: usize = 100;
/// Largest centroid shift (Euclidean) at which iteration stops.
pub const KMEANS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct KMeansFit<T> {
    /// Cluster index per row.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    /// Sum of squared distances after each assignment step.
    pub objective: Vec<T>,
    pub iterations: usize,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<T: Scalar>(x: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, sq_dist(x, &centroids[0]));
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centroids<T: Scalar>(x: &EmbeddingMatrix<T>, k: usize, seed: u64) -> Vec<Vec<T>> {
    let q = x.rows();
    let mut rng = rng::stream(seed, "kmeans++", 0);
    let mut chosen = vec![rng.gen_range(0..q)];
    let mut d2: Vec<f64> = (0..q).map(|i| sq_dist(x.row(i), x.row(chosen[0])).to_f()).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen_range(0.0..total);
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if r < d {
                    pick = Some(i);
                    break;
                }
                r -= d;
            }
            // Rounding can leave `r` just past the last positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..q).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)).to_f());
        }
    }
    chosen.iter().map(|&i| x.row(i).to_vec()).collect()
}

pub fn kmeans_detailed<T: Scalar>(
    x: &EmbeddingMatrix<T>,
    k: usize,
    seed: u64,
) -> Result<KMeansFit<T>, GeometryError> {
    let q = x.rows();
    if k == 0 || k > q {
        return Err(GeometryError::BadClusterCount { k, rows: q });
    }
    let m = x.dim();
    let mut centroids = seed_centroids(x, k, seed);
    let mut assignments = vec![0; q];
    let mut objective = Vec::new();
    let tol = T::of(KMEANS_TOLERANCE);
    let mut iterations = 0;

    while iterations < KMEANS_MAX_ITERATIONS {
        iterations += 1;
        let mut obj = T::zero();
        let mut dist = vec![T::zero(); q];
        for i in 0..q {
            let (c, d) = nearest(x.row(i), &centroids);
            assignments[i] = c;
            dist[i] = d;
            obj += d;
        }
        objective.push(obj);

        let mut sums = vec![vec![T::zero(); m]; k];
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, &v) in sums[c].iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut shift = T::zero();
        let mut taken = vec![false; q];
        for c in 0..k {
            let next = if counts[c] > 0 {
                let n = T::of(counts[c] as f64);
                sums[c].iter().map(|&s| s / n).collect()
            } else {
                // Empty cluster: reseed at the worst-served row.
                let far = (0..q)
                    .filter(|&i| !taken[i])
                    .fold(None, |best: Option<usize>, i| match best {
                        Some(b) if dist[b] >= dist[i] => Some(b),
                        _ => Some(i),
                    })
                    .unwrap_or(0);
                taken[far] = true;
                x.row(far).to_vec()
            };
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift < tol {
            break;
        }
    }
    // Final assignment against the converged centroids.
    for i in 0..q {
        assignments[i] = nearest(x.row(i), &centroids).0;
    }
    Ok(KMeansFit {
        assignments,
        centroids,
        objective,
        iterations,
    })
}

/// Partitions the rows of `x` into `k` clusters, rows kept in input order.
/// Clusters left empty by the final assignment are omitted.
pub fn kmeans<T: Scalar>(
    x: &EmbeddingMatrix<T>,
    k: usize,
    seed: u64,
) -> Result<Vec<EmbeddingMatrix<T>>, GeometryError> {
    let fit = kmeans_detailed(x, k, seed)?;
    let mut clusters: Vec<EmbeddingMatrix<T>> = (0..k).map(|_| EmbeddingMatrix::new(x.dim())).collect();
    for (i, &c) in fit.assignments.iter().enumerate() {
        clusters[c]
            .push(x.row_ids()[i].clone(), x.row(i))
            .expect("same dimension");
    }
    clusters.retain(|c| !c.is_empty());
    Ok(clusters)
}
