use super::kmeans::{kmeans, sq_dist, ClusteringResult};
use super::SchemaError;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

/// Mean silhouette coefficient with Euclidean distance.
///
/// For each point, `a` is the mean distance to the rest of its cluster and
/// `b` the smallest mean distance to another cluster; its score is
/// `(b - a) / max(a, b)`. Points in singleton clusters, and points where
/// `a = b = 0`, score 0.
pub fn silhouette(points: &[Vec<f64>], assignments: &[usize]) -> Result<f64, SchemaError> {
    if points.len() != assignments.len() {
        return Err(SchemaError::LengthMismatch {
            points: points.len(),
            assignments: assignments.len(),
        });
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(SchemaError::SingleCluster);
    }
    let n = points.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        let own = assignments[i];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[assignments[j]] += dist(&points[i], &points[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub k: usize,
    /// `(K, silhouette)` for every grid value, ascending by K.
    pub scores: Vec<(usize, f64)>,
    pub result: ClusteringResult,
}

/// Runs k-means for every grid value and keeps the highest silhouette; ties
/// go to the smaller K.
pub fn select_k(points: &[Vec<f64>], k_grid: &[usize], seed: u64) -> Result<KSelection, SchemaError> {
    let mut grid = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(SchemaError::InvalidK { k: 0, n: points.len() });
    }
    let mut best: Option<(f64, ClusteringResult)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for &k in &grid {
        let result = kmeans(points, k, seed)?;
        let score = silhouette(points, &result.assignments)?;
        scores.push((k, score));
        if best.as_ref().map_or(true, |(s, _)| score > *s) {
            best = Some((score, result));
        }
    }
    let (_, result) = best.expect("grid non-empty");
    Ok(KSelection {
        k: result.k,
        scores,
        result,
    })
}
