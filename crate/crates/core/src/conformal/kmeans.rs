//! Lloyd's k-means with k-means++ seeding, deterministic given a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ConformalError;
use crate::Scalar;

const MAX_ITERATIONS: usize = 100;
const SHIFT_TOLERANCE: Scalar = 1e-6;

/// Fitted cluster model: `k` centroids of dimension `dim` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel {
    centroids: Vec<Scalar>,
    k: usize,
    dim: usize,
}

fn sq_dist(a: &[Scalar], b: &[Scalar]) -> Scalar {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Fit `k` clusters on `points` (row-major, `points.len() = n * dim`).
///
/// k-means++ seeding from the given seed, Lloyd iterations until the maximum
/// centroid shift drops below 1e-6 or 100 iterations; empty clusters are
/// re-seeded from the point farthest from its assigned centroid.
pub fn fit_kmeans(
    points: &[Scalar],
    dim: usize,
    k: usize,
    seed: u64,
) -> Result<KMeansModel, ConformalError> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(ConformalError::InvalidInput(format!(
            "point buffer of length {} is not a multiple of dimension {dim}",
            points.len()
        )));
    }
    let n = points.len() / dim;
    if k == 0 || n < k {
        return Err(ConformalError::TooFewPoints { have: n, need: k });
    }
    let point = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centroids: Vec<Scalar> = Vec::with_capacity(k * dim);
    let first = rng.gen_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut d2: Vec<Scalar> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
    while centroids.len() < k * dim {
        let total: Scalar = d2.iter().sum();
        let chosen = if total > 0.0 {
            let mut r = rng.gen::<Scalar>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            // All remaining points coincide with a chosen centroid.
            rng.gen_range(0..n)
        };
        centroids.extend_from_slice(point(chosen));
        let c = centroids.len() / dim - 1;
        let new_c: Vec<Scalar> = centroids[c * dim..(c + 1) * dim].to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(point(i), &new_c);
            if nd < *d {
                *d = nd;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..MAX_ITERATIONS {
        // Assignment step; ties go to the lowest cluster index.
        for i in 0..n {
            let mut best = 0usize;
            let mut best_d = sq_dist(point(i), &centroids[0..dim]);
            for c in 1..k {
                let d = sq_dist(point(i), &centroids[c * dim..(c + 1) * dim]);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assignment[i] = best;
        }

        // Update step.
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(point(i)) {
                *s += x;
            }
        }
        let mut next = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                for (dst, &s) in next[c * dim..(c + 1) * dim].iter_mut().zip(&sums[c * dim..]) {
                    *dst = s / counts[c] as Scalar;
                }
            } else {
                // Re-seed an empty cluster at the point farthest from its
                // current centroid.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(point(a), &centroids[assignment[a] * dim..][..dim]);
                        let db = sq_dist(point(b), &centroids[assignment[b] * dim..][..dim]);
                        da.partial_cmp(&db).expect("finite distances")
                    })
                    .expect("n >= 1");
                next[c * dim..(c + 1) * dim].copy_from_slice(point(far));
            }
        }

        let shift = (0..k)
            .map(|c| sq_dist(&centroids[c * dim..(c + 1) * dim], &next[c * dim..(c + 1) * dim]).sqrt())
            .fold(0.0_f64, Scalar::max);
        centroids = next;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }

    Ok(KMeansModel { centroids, k, dim })
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centroid(&self, c: usize) -> &[Scalar] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn assign(&self, x: &[Scalar]) -> usize {
        debug_assert_eq!(x.len(), self.dim);
        let mut best = 0usize;
        let mut best_d = sq_dist(x, self.centroid(0));
        for c in 1..self.k {
            let d = sq_dist(x, self.centroid(c));
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_blobs_recovered() {
        // 20 points in two tight blobs; check co-membership (label-invariant)
        // against the ground-truth partition.
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.extend_from_slice(&[0.0 + 0.01 * i as f64, 0.0 - 0.01 * i as f64]);
        }
        for i in 0..10 {
            pts.extend_from_slice(&[5.0 + 0.01 * i as f64, 5.0 - 0.01 * i as f64]);
        }
        let model = fit_kmeans(&pts, 2, 2, 7).unwrap();
        let labels: Vec<usize> =
            (0..20).map(|i| model.assign(&pts[i * 2..(i + 1) * 2])).collect();
        for a in 0..20 {
            for b in (a + 1)..20 {
                let same_truth = (a < 10) == (b < 10);
                let same_model = labels[a] == labels[b];
                assert_eq!(same_truth, same_model, "pair ({a}, {b})");
            }
        }
    }

    #[test]
    fn single_cluster_centroid_is_mean() {
        let pts = [1.0, 2.0, 3.0, 4.0, 5.0, 12.0];
        let model = fit_kmeans(&pts, 2, 1, 0).unwrap();
        assert!((model.centroid(0)[0] - 3.0).abs() < 1e-12);
        assert!((model.centroid(0)[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_points_terminate_without_nan() {
        let pts = vec![0.5; 12];
        let model = fit_kmeans(&pts, 2, 2, 3).unwrap();
        assert!(model.centroids.iter().all(|c| c.is_finite()));
        assert_eq!(model.assign(&[0.5, 0.5]), model.assign(&[0.5, 0.5]));
    }

    #[test]
    fn too_few_points_is_an_error() {
        let pts = [0.0, 1.0];
        assert!(matches!(
            fit_kmeans(&pts, 1, 3, 0),
            Err(ConformalError::TooFewPoints { have: 2, need: 3 })
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let pts: Vec<f64> = (0..60).map(|i| ((i * 37) % 13) as f64 * 0.3).collect();
        let a = fit_kmeans(&pts, 3, 4, 99).unwrap();
        let b = fit_kmeans(&pts, 3, 4, 99).unwrap();
        assert_eq!(a, b);
    }
}
