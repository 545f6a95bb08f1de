//! Weighted spherical k-means over unit directions.

use alloc::vec;
use alloc::vec::Vec;

use glam::DVec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;
const DISTINCT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionClusters {
    /// Unit centroid directions.
    pub centroids: Vec<DVec3>,
    /// Total input weight assigned to each centroid.
    pub cluster_weights: Vec<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    /// `Σ w·(1 − n·c)` after every assignment pass.
    pub objective_history: Vec<f64>,
}

/// Clusters unit `normals` with cosine distance `1 − n·c`, weighting each by `weights`.
///
/// The effective cluster count is `min(k, distinct normals)`. Seeding is
/// k-means++ driven by `seed`; centroids are renormalized after every update and
/// an emptied cluster is moved onto the point with the largest weighted distance
/// to its own centroid.
pub fn weighted_kmeans_directions(
    normals: &[DVec3],
    weights: &[f64],
    k: usize,
    seed: u64,
) -> Result<DirectionClusters> {
    if normals.is_empty() || k == 0 {
        return Err(Error::EmptyInput);
    }
    if normals.len() != weights.len() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{} normals, {} weights",
            normals.len(),
            weights.len()
        )));
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::OutOfRange {
            name: "weight",
            value: w,
        });
    }
    let k = k.min(count_distinct(normals));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(normals, weights, k, &mut rng);

    let n = normals.len();
    let mut assignments = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut changed = false;
        for (i, normal) in normals.iter().enumerate() {
            let best = nearest(&centroids, *normal);
            if best != assignments[i] {
                assignments[i] = best;
                changed = true;
            }
        }
        history.push(objective(normals, weights, &centroids, &assignments));
        if !changed {
            break;
        }

        let mut sums = vec![DVec3::ZERO; k];
        let mut mass = vec![0.0; k];
        for i in 0..n {
            sums[assignments[i]] += weights[i] * normals[i];
            mass[assignments[i]] += weights[i];
        }
        for c in 0..k {
            if mass[c] > 0.0 {
                let len = sums[c].length();
                if len > 1e-12 {
                    centroids[c] = sums[c] / len;
                }
            } else {
                let far = farthest(normals, weights, &centroids, &assignments);
                centroids[c] = normals[far];
                assignments[far] = c;
            }
        }
    }

    let mut cluster_weights = vec![0.0; k];
    for i in 0..n {
        cluster_weights[assignments[i]] += weights[i];
    }
    Ok(DirectionClusters {
        centroids,
        cluster_weights,
        assignments,
        iterations,
        objective_history: history,
    })
}

fn count_distinct(normals: &[DVec3]) -> usize {
    let mut seen: Vec<DVec3> = Vec::new();
    for n in normals {
        if !seen.iter().any(|s| s.distance(*n) < DISTINCT_EPS) {
            seen.push(*n);
        }
    }
    seen.len()
}

fn nearest(centroids: &[DVec3], n: DVec3) -> usize {
    let mut best = 0;
    let mut best_cos = f64::NEG_INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let cos = n.dot(*centroid);
        if cos > best_cos {
            best_cos = cos;
            best = c;
        }
    }
    best
}

fn objective(normals: &[DVec3], weights: &[f64], centroids: &[DVec3], assign: &[usize]) -> f64 {
    normals
        .iter()
        .zip(weights)
        .zip(assign)
        .map(|((n, w), &a)| w * (1.0 - n.dot(centroids[a])))
        .sum()
}

fn farthest(normals: &[DVec3], weights: &[f64], centroids: &[DVec3], assign: &[usize]) -> usize {
    let mut best = 0;
    let mut best_cost = f64::NEG_INFINITY;
    for i in 0..normals.len() {
        let cost = weights[i] * (1.0 - normals[i].dot(centroids[assign[i]]));
        if cost > best_cost {
            best_cost = cost;
            best = i;
        }
    }
    best
}

/// k-means++ seeding with probability proportional to `w · (1 − n·c)`.
fn seed_plus_plus(normals: &[DVec3], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVec3> {
    let total: f64 = weights.iter().sum();
    let first = if total > 0.0 {
        pick(weights, total, rng)
    } else {
        rng.random_range(0..normals.len())
    };
    let mut centroids = vec![normals[first]];
    let mut dist: Vec<f64> = normals.iter().map(|n| 1.0 - n.dot(normals[first])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = dist
            .iter()
            .zip(weights)
            .map(|(d, w)| if *d > DISTINCT_EPS { w * d } else { 0.0 })
            .collect();
        let total: f64 = scores.iter().sum();
        let next = if total > 0.0 {
            pick(&scores, total, rng)
        } else {
            // only zero-weight points remain uncovered
            let mut best = 0;
            for i in 1..dist.len() {
                if dist[i] > dist[best] {
                    best = i;
                }
            }
            best
        };
        let c = normals[next];
        centroids.push(c);
        for (d, n) in dist.iter_mut().zip(normals) {
            *d = d.min(1.0 - n.dot(c));
        }
    }
    centroids
}

fn pick(scores: &[f64], total: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s <= 0.0 {
            continue;
        }
        acc += s;
        last = i;
        if acc > target {
            return i;
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes() -> Vec<DVec3> {
        vec![DVec3::X, -DVec3::X, DVec3::Y, -DVec3::Y, DVec3::Z, -DVec3::Z]
    }

    /// Exhaustive search over all assignments of `points` to `k` labels; returns
    /// the smallest weighted cosine cost with renormalized weighted-mean centroids.
    fn brute_force_best(points: &[DVec3], weights: &[f64], k: usize) -> f64 {
        let n = points.len();
        let mut labels = vec![0usize; n];
        let mut best = f64::INFINITY;
        loop {
            let mut sums = vec![DVec3::ZERO; k];
            for i in 0..n {
                sums[labels[i]] += weights[i] * points[i];
            }
            let cost: f64 = (0..n)
                .map(|i| {
                    let s = sums[labels[i]];
                    let c = if s.length() > 1e-12 { s.normalize() } else { points[i] };
                    weights[i] * (1.0 - points[i].dot(c))
                })
                .sum();
            best = best.min(cost);
            let mut j = 0;
            loop {
                if j == n {
                    return best;
                }
                labels[j] += 1;
                if labels[j] < k {
                    break;
                }
                labels[j] = 0;
                j += 1;
            }
        }
    }

    #[test]
    fn six_axes_each_get_a_cluster() {
        let pts = axes();
        let w = vec![1.0; 6];
        let oracle = brute_force_best(&pts, &w, 6);
        assert!(oracle.abs() < 1e-12);
        let r = weighted_kmeans_directions(&pts, &w, 6, 42).unwrap();
        assert_eq!(r.centroids.len(), 6);
        for a in &pts {
            assert!(r.centroids.iter().any(|c| c.distance(*a) < 1e-12));
        }
        assert!(r.objective_history.last().unwrap().abs() < 1e-12);
    }

    #[test]
    fn identical_normals_collapse_to_one_cluster() {
        let pts = vec![DVec3::Z; 10];
        let w: Vec<f64> = (0..10).map(|i| i as f64 + 0.5).collect();
        let r = weighted_kmeans_directions(&pts, &w, 16, 0).unwrap();
        assert_eq!(r.centroids, vec![DVec3::Z]);
    }

    #[test]
    fn weighted_mean_is_renormalized() {
        let r = weighted_kmeans_directions(&[DVec3::X, DVec3::Y], &[3.0, 1.0], 1, 5).unwrap();
        let expected = DVec3::new(3.0, 1.0, 0.0) / libm::sqrt(10.0);
        assert!(r.centroids[0].distance(expected) < 1e-12);
        assert!((expected.x - 0.9487).abs() < 1e-4 && (expected.y - 0.3162).abs() < 1e-4);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert_eq!(weighted_kmeans_directions(&[], &[], 3, 0), Err(Error::EmptyInput));
    }

    #[test]
    fn small_problems_reach_brute_force_optimum_often() {
        // Lloyd is a local method; on well separated data it should match.
        let pts = vec![
            DVec3::new(1.0, 0.1, 0.0).normalize(),
            DVec3::new(1.0, -0.1, 0.0).normalize(),
            DVec3::new(0.0, 1.0, 0.1).normalize(),
            DVec3::new(0.1, 1.0, 0.0).normalize(),
            DVec3::new(0.0, 0.1, 1.0).normalize(),
            DVec3::new(0.0, -0.1, 1.0).normalize(),
        ];
        let w = vec![1.0, 2.0, 1.0, 0.5, 1.0, 3.0];
        let oracle = brute_force_best(&pts, &w, 3);
        let r = weighted_kmeans_directions(&pts, &w, 3, 9).unwrap();
        assert!((r.objective_history.last().unwrap() - oracle).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit(v: &[f64]) -> Option<DVec3> {
            let d = DVec3::new(v[0], v[1], v[2]);
            (d.length() > 1e-3).then(|| d.normalize())
        }

        proptest! {
            #[test]
            fn objective_never_increases(
                raw in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 1..60),
                weights in proptest::collection::vec(0.0f64..5.0, 60),
                k in 1usize..10,
                seed in any::<u64>(),
            ) {
                let pts: Vec<DVec3> = raw.iter().filter_map(|v| unit(v)).collect();
                prop_assume!(!pts.is_empty());
                let w = &weights[..pts.len()];
                let r = weighted_kmeans_directions(&pts, w, k, seed).unwrap();
                for pair in r.objective_history.windows(2) {
                    prop_assert!(pair[1] <= pair[0] + 1e-9, "{:?}", r.objective_history);
                }
                for c in &r.centroids {
                    prop_assert!((c.length() - 1.0).abs() < 1e-9);
                }
                let again = weighted_kmeans_directions(&pts, w, k, seed).unwrap();
                prop_assert_eq!(r, again);
            }
        }
    }
}
