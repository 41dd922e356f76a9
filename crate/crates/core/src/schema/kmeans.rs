use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SchemaError;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub k: usize,
    /// Cluster index per input point.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances from each point to its centroid.
    pub inertia: f64,
    pub seed: u64,
    pub iterations: usize,
    /// Inertia after every centroid update, for monotonicity checks.
    #[serde(default)]
    pub inertia_trace: Vec<f64>,
}

impl ClusteringResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the smaller index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Assigns an embedding to its closest cluster centroid (Euclidean).
pub fn assign_to_cluster(embedding: &[f64], result: &ClusteringResult) -> usize {
    nearest(embedding, &result.centroids)
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            // Rounding can walk past the last positive weight.
            if d2[pick] <= 0.0 {
                pick = d2.iter().rposition(|&w| w > 0.0).expect("total > 0");
            }
            pick
        } else {
            // Every point coincides with a chosen center: pick any unused index.
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.gen_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    (sums, counts)
}

fn inertia(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops when assignments are stable or after [`MAX_ITERATIONS`] updates.
/// An empty cluster takes over the point farthest from its own centroid
/// (drawn from a cluster with more than one member).
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusteringResult, SchemaError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(SchemaError::InvalidK { k, n });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(SchemaError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        let (mut next, mut counts) = means(points, &assignments, k, dim);
        repair_empty(points, &mut assignments, &mut next, &mut counts, dim);
        centroids = next;
        iterations += 1;
        trace.push(inertia(points, &assignments, &centroids));

        let reassigned: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if reassigned == assignments {
            break;
        }
        assignments = reassigned;
        if iterations >= MAX_ITERATIONS {
            let (m, mut counts) = means(points, &assignments, k, dim);
            centroids = m;
            repair_empty(points, &mut assignments, &mut centroids, &mut counts, dim);
            trace.push(inertia(points, &assignments, &centroids));
            break;
        }
    }

    Ok(ClusteringResult {
        k,
        inertia: inertia(points, &assignments, &centroids),
        assignments,
        centroids,
        seed,
        iterations,
        inertia_trace: trace,
    })
}

fn repair_empty(
    points: &[Vec<f64>],
    assignments: &mut [usize],
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
    dim: usize,
) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let far = (0..points.len())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&a, &b| {
                let da = sq_dist(&points[a], &centroids[assignments[a]]);
                let db = sq_dist(&points[b], &centroids[assignments[b]]);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= n guarantees a donor cluster");
        let donor = assignments[far];
        assignments[far] = empty;
        counts[donor] -= 1;
        counts[empty] = 1;
        centroids[empty] = points[far].clone();
        let mut sum = vec![0.0; dim];
        for (p, _) in points.iter().zip(assignments.iter()).filter(|(_, &a)| a == donor) {
            sum.iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        sum.iter_mut().for_each(|s| *s /= counts[donor] as f64);
        centroids[donor] = sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn sorted_centroids(r: &ClusteringResult) -> Vec<f64> {
        let mut c: Vec<f64> = r.centroids.iter().map(|c| c[0]).collect();
        c.sort_by(f64::total_cmp);
        c
    }

    #[test]
    fn symmetric_two_cluster_optimum() {
        for seed in 0..20 {
            let r = kmeans(&pts(&[0.0, 1.0, 10.0, 11.0]), 2, seed).unwrap();
            assert_eq!(sorted_centroids(&r), vec![0.5, 10.5]);
            assert_eq!(r.inertia, 1.0);
        }
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let r = kmeans(&pts(&[3.0, -1.0, 7.5, 2.0]), 4, 7).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.cluster_sizes(), vec![1, 1, 1, 1]);
    }

    #[test]
    fn duplicate_points_do_not_leave_empty_clusters() {
        let r = kmeans(&pts(&[1.0, 1.0, 1.0, 5.0]), 3, 3).unwrap();
        assert!(r.cluster_sizes().iter().all(|&s| s >= 1));
    }

    /// Exhaustive search over all 2-partitions; the global optimum.
    fn brute_force_two_partition(xs: &[f64]) -> f64 {
        let n = xs.len();
        let mut best = f64::INFINITY;
        for mask in 1..(1u32 << n) - 1 {
            let mut cost = 0.0;
            for side in [true, false] {
                let members: Vec<f64> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).map(|i| xs[i]).collect();
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                cost += members.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
            }
            best = best.min(cost);
        }
        best
    }

    #[test]
    fn three_blobs_two_clusters_reaches_brute_force_optimum() {
        let xs = [0.0, 0.1, 10.0, 10.1, 20.0, 20.1];
        let oracle = brute_force_two_partition(&xs);
        assert!((oracle - 100.015).abs() < 1e-9);
        let r = kmeans(&pts(&xs), 2, 42).unwrap();
        assert!((r.inertia - oracle).abs() < 1e-9, "{} vs {oracle}", r.inertia);
        // A Lloyd fixed point: every point sits with its nearest centroid.
        for (p, &a) in pts(&xs).iter().zip(&r.assignments) {
            assert_eq!(nearest(p, &r.centroids), a);
        }
    }

    #[test]
    fn invalid_k() {
        assert_eq!(kmeans(&pts(&[1.0]), 2, 0), Err(SchemaError::InvalidK { k: 2, n: 1 }));
        assert_eq!(kmeans(&pts(&[1.0]), 0, 0), Err(SchemaError::InvalidK { k: 0, n: 1 }));
    }

    #[test]
    fn assignment_ties_go_to_smaller_id() {
        let r = ClusteringResult {
            k: 8,
            assignments: vec![],
            centroids: (0..8).map(|i| vec![i as f64 * 10.0]).collect(),
            inertia: 0.0,
            seed: 0,
            iterations: 0,
            inertia_trace: vec![],
        };
        assert_eq!(assign_to_cluster(&[70.0], &r), 7);
        assert_eq!(assign_to_cluster(&[4.0], &r), 0);
        let tie = ClusteringResult {
            centroids: vec![vec![99.0], vec![99.0], vec![0.0], vec![99.0], vec![99.0], vec![10.0]],
            k: 6,
            ..r
        };
        assert_eq!(assign_to_cluster(&[5.0], &tie), 2);
    }
}
