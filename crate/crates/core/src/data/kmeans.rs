//! Two-cluster Lloyd's algorithm with k-means++ seeding.

use crate::error::{Error, Result};
use crate::rng::SeedStream;

const MAX_ITERS: usize = 100;
const TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// Cluster id per input point, 0 or 1.
    pub assignments: Vec<usize>,
    pub centroids: [Vec<f64>; 2],
    pub iterations: usize,
    /// Set when the data could not support two distinct clusters.
    pub degenerate: bool,
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_of(points: &[Vec<f64>], members: &[usize]) -> Vec<f64> {
    let dim = points[0].len();
    let mut m = vec![0.0; dim];
    for &i in members {
        for (j, v) in points[i].iter().enumerate() {
            m[j] += v;
        }
    }
    for v in &mut m {
        *v /= members.len() as f64;
    }
    m
}

/// K=2 clustering. Nearest-centroid ties go to cluster 0 (the lower id).
/// With `balanced`, points are ranked after convergence by the ratio of
/// their distance to centroid 0 over their distance to centroid 1, and the
/// top half (those relatively closest to centroid 1) becomes cluster 1;
/// for odd counts cluster 1 gets the smaller half.
pub fn kmeans_two(
    points: &[Vec<f64>],
    rng: &mut SeedStream,
    balanced: bool,
) -> Result<KMeansResult> {
    if points.len() < 2 {
        return Err(Error::Argument(format!(
            "k-means needs at least 2 samples, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::Argument(
            "histogram vectors must be non-empty and equally sized".into(),
        ));
    }

    // k-means++ for K=2: uniform first centroid, second proportional to
    // squared distance from the first.
    let first = rng.below(points.len());
    let d2: Vec<f64> = points.iter().map(|p| dist_sq(p, &points[first])).collect();
    let total: f64 = d2.iter().sum();
    let second = if total <= 0.0 {
        // Every point coincides with the first: degenerate input.
        let mut result = KMeansResult {
            assignments: vec![0; points.len()],
            centroids: [points[first].clone(), points[first].clone()],
            iterations: 0,
            degenerate: true,
        };
        if balanced {
            balanced_assign(points, &mut result);
        }
        return Ok(result);
    } else {
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut chosen = points.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if acc >= target && d > 0.0 {
                chosen = i;
                break;
            }
        }
        chosen
    };

    let mut centroids = [points[first].clone(), points[second].clone()];
    let mut assignments = vec![0usize; points.len()];
    let mut iterations = 0;
    for _ in 0..MAX_ITERS {
        iterations += 1;
        for (i, p) in points.iter().enumerate() {
            let d0 = dist_sq(p, &centroids[0]);
            let d1 = dist_sq(p, &centroids[1]);
            assignments[i] = usize::from(d1 < d0);
        }
        let members0: Vec<usize> = (0..points.len()).filter(|&i| assignments[i] == 0).collect();
        let members1: Vec<usize> = (0..points.len()).filter(|&i| assignments[i] == 1).collect();
        if members0.is_empty() || members1.is_empty() {
            // Pull the point farthest from the surviving centroid into the
            // empty cluster; deterministic by taking the lowest such index.
            let (full, empty) = if members0.is_empty() { (1, 0) } else { (0, 1) };
            let far = (0..points.len())
                .max_by(|&a, &b| {
                    dist_sq(&points[a], &centroids[full])
                        .partial_cmp(&dist_sq(&points[b], &centroids[full]))
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .unwrap();
            assignments[far] = empty;
        }
        let members0: Vec<usize> = (0..points.len()).filter(|&i| assignments[i] == 0).collect();
        let members1: Vec<usize> = (0..points.len()).filter(|&i| assignments[i] == 1).collect();
        let new0 = mean_of(points, &members0);
        let new1 = mean_of(points, &members1);
        let movement = dist_sq(&new0, &centroids[0])
            .sqrt()
            .max(dist_sq(&new1, &centroids[1]).sqrt());
        centroids = [new0, new1];
        if movement < TOL {
            break;
        }
    }

    let mut result = KMeansResult {
        assignments,
        centroids,
        iterations,
        degenerate: false,
    };
    if balanced {
        balanced_assign(points, &mut result);
    }
    Ok(result)
}

fn balanced_assign(points: &[Vec<f64>], result: &mut KMeansResult) {
    let n = points.len();
    let mut ranked: Vec<(usize, f64)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d0 = dist_sq(p, &result.centroids[0]).sqrt();
            let d1 = dist_sq(p, &result.centroids[1]).sqrt();
            let ratio = if d1 == 0.0 {
                if d0 == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                d0 / d1
            };
            (i, ratio)
        })
        .collect();
    // Highest ratio first; ties keep lower sample index first.
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for v in result.assignments.iter_mut() {
        *v = 0;
    }
    for &(i, _) in ranked.iter().take(n / 2) {
        result.assignments[i] = 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(dim: usize, at: usize, noise: f64, rng: &mut SeedStream) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[at] = 1.0;
        for x in &mut v {
            *x += noise * rng.uniform();
        }
        v
    }

    #[test]
    fn separated_blobs_recovered() {
        let mut rng = SeedStream::new(14);
        let mut points = Vec::new();
        for _ in 0..10 {
            points.push(one_hot(4, 0, 0.01, &mut rng));
        }
        for _ in 0..10 {
            points.push(one_hot(4, 3, 0.01, &mut rng));
        }
        let res = kmeans_two(&points, &mut rng, false).unwrap();
        assert!(!res.degenerate);
        let first = res.assignments[0];
        assert!(res.assignments[..10].iter().all(|&a| a == first));
        assert!(res.assignments[10..].iter().all(|&a| a == 1 - first));
    }

    #[test]
    fn identical_points_flagged_degenerate() {
        let points = vec![vec![0.5, 0.5]; 6];
        let mut rng = SeedStream::new(2);
        let res = kmeans_two(&points, &mut rng, false).unwrap();
        assert!(res.degenerate);
        assert!(res.assignments.iter().all(|&a| a == 0));
    }

    #[test]
    fn balanced_mode_gives_exact_halves() {
        let mut rng = SeedStream::new(8);
        // Deliberately lopsided blobs: 14 vs 6.
        let mut points = Vec::new();
        for _ in 0..14 {
            points.push(one_hot(3, 0, 0.02, &mut rng));
        }
        for _ in 0..6 {
            points.push(one_hot(3, 2, 0.02, &mut rng));
        }
        let res = kmeans_two(&points, &mut rng, true).unwrap();
        let ones = res.assignments.iter().filter(|&&a| a == 1).count();
        assert_eq!(ones, 10);
    }

    #[test]
    fn same_seed_same_result() {
        let mut rng = SeedStream::new(3);
        let points: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..5).map(|_| rng.uniform()).collect())
            .collect();
        let a = kmeans_two(&points, &mut SeedStream::new(9), false).unwrap();
        let b = kmeans_two(&points, &mut SeedStream::new(9), false).unwrap();
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn too_few_points_rejected() {
        let mut rng = SeedStream::new(1);
        assert!(kmeans_two(&[vec![1.0]], &mut rng, false).is_err());
    }
}
