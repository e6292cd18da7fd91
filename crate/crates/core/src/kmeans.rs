//! Seeded Lloyd's K-Means over planar points.
//!
//! Initialization is distance-weighted (k-means++) and repeated over several
//! restarts; the lowest-SSE run wins. Ties in nearest-centroid assignment go to
//! the lowest cluster index, and an empty cluster is reseeded with the point
//! farthest from its own centroid.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iters: 300,
            seed,
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<F> {
    pub labels: Vec<usize>,
    pub centroids: Vec<Point<F>>,
    pub sse: F,
    /// SSE after every centroid update of the winning run.
    pub sse_trace: Vec<F>,
}

impl<F: Scalar> Clustering<F> {
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.centroids.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            groups[l].push(i);
        }
        groups
    }
}

pub fn kmeans<F: Scalar>(points: &[Point<F>], cfg: &KMeansConfig) -> Result<Clustering<F>> {
    let n = points.len();
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::InvalidK { k: cfg.k, n });
    }
    let mut best: Option<Clustering<F>> = None;
    for restart in 0..cfg.restarts.max(1) {
        let seed = cfg.seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = lloyd(points, seed_centroids(points, cfg.k, &mut rng), cfg.max_iters);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Spatial sum of squared distances from each point to its centroid.
pub fn sse<F: Scalar>(points: &[Point<F>], labels: &[usize], centroids: &[Point<F>]) -> F {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| p.squared_distance(&centroids[l]))
        .sum()
}

fn seed_centroids<F: Scalar>(points: &[Point<F>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point<F>> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| p.squared_distance(&points[chosen[0]]).as_f64()).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a chosen centre
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(p.squared_distance(&points[next]).as_f64());
        }
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

fn nearest<F: Scalar>(p: &Point<F>, centroids: &[Point<F>]) -> usize {
    let mut best = 0;
    let mut best_d = p.squared_distance(&centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = p.squared_distance(c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn assign<F: Scalar>(points: &[Point<F>], centroids: &[Point<F>]) -> Vec<usize> {
    points.iter().map(|p| nearest(p, centroids)).collect()
}

fn means<F: Scalar>(points: &[Point<F>], labels: &[usize], previous: &[Point<F>]) -> Vec<Point<F>> {
    let k = previous.len();
    let mut sums = vec![(F::zero(), F::zero(), 0usize); k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l].0 = sums[l].0 + p.x;
        sums[l].1 = sums[l].1 + p.y;
        sums[l].2 += 1;
    }
    sums.iter()
        .zip(previous)
        .map(|(&(sx, sy, c), prev)| {
            if c == 0 {
                *prev
            } else {
                let c = F::of(c as f64);
                Point::new(sx / c, sy / c)
            }
        })
        .collect()
}

/// Moves the farthest point of a multi-member cluster into each empty cluster.
fn repair_empty<F: Scalar>(points: &[Point<F>], labels: &mut [usize], centroids: &mut [Point<F>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = F::neg_infinity();
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] > 1 {
                let d = p.squared_distance(&centroids[labels[i]]);
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        let i = far.expect("k <= n leaves a multi-member cluster");
        labels[i] = empty;
        centroids[empty] = points[i];
    }
}

fn lloyd<F: Scalar>(points: &[Point<F>], mut centroids: Vec<Point<F>>, max_iters: usize) -> Clustering<F> {
    let mut labels = assign(points, &centroids);
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        repair_empty(points, &mut labels, &mut centroids);
        centroids = means(points, &labels, &centroids);
        trace.push(sse(points, &labels, &centroids));
        let next = assign(points, &centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    repair_empty(points, &mut labels, &mut centroids);
    centroids = means(points, &labels, &centroids);
    let total = sse(points, &labels, &centroids);
    Clustering {
        labels,
        centroids,
        sse: total,
        sse_trace: trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point<f64>> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    #[test]
    fn two_obvious_clusters() {
        let p = pts(&[(0.0, 0.0), (0.0, 0.1), (1.0, 1.0), (1.0, 0.9)]);
        let c = kmeans(&p, &KMeansConfig::new(2, 1)).unwrap();
        assert_eq!(c.labels[0], c.labels[1]);
        assert_eq!(c.labels[2], c.labels[3]);
        assert_ne!(c.labels[0], c.labels[2]);
        assert!((c.sse - 0.01).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let p = pts(&[(0.0, 0.0), (0.3, 0.1), (0.3, 0.1), (0.9, 0.2)]);
        let c = kmeans(&p, &KMeansConfig::new(4, 7)).unwrap();
        let mut labels = c.labels.clone();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3]);
        assert_eq!(c.sse, 0.0);
    }

    #[test]
    fn invalid_k() {
        let p = pts(&[(0.0, 0.0)]);
        assert!(matches!(kmeans(&p, &KMeansConfig::new(2, 0)), Err(Error::InvalidK { k: 2, n: 1 })));
        assert!(matches!(kmeans(&p, &KMeansConfig::new(0, 0)), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn corners_collapse_to_centre() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let c = kmeans(&p, &KMeansConfig::new(1, 3)).unwrap();
        assert_eq!(c.centroids[0], Point::new(0.5, 0.5));
    }

    #[test]
    fn single_precision() {
        let p: Vec<Point<f32>> = vec![Point::new(0.0, 0.0), Point::new(0.0, 0.1), Point::new(1.0, 1.0)];
        let c = kmeans(&p, &KMeansConfig::new(2, 5)).unwrap();
        assert_eq!(c.labels[0], c.labels[1]);
    }

    proptest! {
        #[test]
        fn converged_assignment_is_a_fixed_point(
            coords in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..40),
            k in 1usize..4,
            seed in 0u64..100,
        ) {
            let p = pts(&coords);
            let c = kmeans(&p, &KMeansConfig::new(k, seed)).unwrap();
            // k nonempty clusters
            let mut counts = vec![0; k];
            for &l in &c.labels { counts[l] += 1; }
            prop_assert!(counts.iter().all(|&n| n > 0));
            // sse trace never increases
            for w in c.sse_trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
            // each point is at a nearest centroid
            for (i, q) in p.iter().enumerate() {
                let own = q.squared_distance(&c.centroids[c.labels[i]]);
                let best = c.centroids.iter().map(|m| q.squared_distance(m)).fold(f64::INFINITY, f64::min);
                prop_assert!(own <= best + 1e-12);
            }
        }

        #[test]
        fn deterministic(coords in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..30), seed in 0u64..50) {
            let p = pts(&coords);
            let cfg = KMeansConfig::new(2, seed);
            prop_assert_eq!(kmeans(&p, &cfg).unwrap(), kmeans(&p, &cfg).unwrap());
        }
    }
}
