//! Exhaustive enumeration for tiny instances.

use crate::geometry::Point;
use crate::scalar::Scalar;

/// Calls `visit` with every partition of `0..n` into exactly `k` nonempty
/// blocks, in lexicographic order of restricted growth strings. Blocks are
/// listed by first element and each block is ascending.
pub fn for_each_partition(n: usize, k: usize, mut visit: impl FnMut(&[Vec<usize>])) {
    if k == 0 || k > n {
        return;
    }
    let mut labels = vec![0usize; n];
    let mut blocks: Vec<Vec<usize>> = Vec::with_capacity(k);
    grow(&mut labels, 0, 0, k, &mut blocks, &mut visit);
}

fn grow(
    labels: &mut [usize],
    i: usize,
    used: usize,
    k: usize,
    blocks: &mut Vec<Vec<usize>>,
    visit: &mut impl FnMut(&[Vec<usize>]),
) {
    let n = labels.len();
    if i == n {
        if used == k {
            blocks.clear();
            blocks.resize(k, Vec::new());
            for (idx, &l) in labels.iter().enumerate() {
                blocks[l].push(idx);
            }
            visit(blocks);
        }
        return;
    }
    // not enough items left to open the remaining blocks
    if used + (n - i) < k {
        return;
    }
    for l in 0..=used.min(k - 1) {
        labels[i] = l;
        grow(labels, i + 1, used.max(l + 1), k, blocks, visit);
    }
}

/// Stirling number of the second kind, `S(n, k)`.
pub fn partition_count(n: usize, k: usize) -> u128 {
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for _ in 0..n {
        for j in (1..=k).rev() {
            row[j] = row[j] * j as u128 + row[j - 1];
        }
        row[0] = 0;
    }
    row[k]
}

/// Spatial SSE of the best partition of `points` into exactly `k` blocks.
pub fn optimal_sse<F: Scalar>(points: &[Point<F>], k: usize) -> Option<(Vec<Vec<usize>>, F)> {
    let mut best: Option<(Vec<Vec<usize>>, F)> = None;
    for_each_partition(points.len(), k, |blocks| {
        let sse: F = blocks.iter().map(|b| block_sse(points, b)).sum();
        if best.as_ref().is_none_or(|(_, s)| sse < *s) {
            best = Some((blocks.to_vec(), sse));
        }
    });
    best
}

fn block_sse<F: Scalar>(points: &[Point<F>], block: &[usize]) -> F {
    let centroid = Point::mean(block.iter().map(|&i| &points[i])).expect("blocks are nonempty");
    block.iter().map(|&i| points[i].squared_distance(&centroid)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_stirling() {
        for n in 1..=7 {
            for k in 1..=n {
                let mut c = 0u128;
                for_each_partition(n, k, |_| c += 1);
                assert_eq!(c, partition_count(n, k), "n={n} k={k}");
            }
        }
        assert_eq!(partition_count(8, 3), 966);
        assert_eq!(partition_count(4, 2), 7);
    }

    #[test]
    fn partitions_are_disjoint_covers() {
        for_each_partition(5, 3, |blocks| {
            let mut all: Vec<usize> = blocks.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, vec![0, 1, 2, 3, 4]);
            assert!(blocks.iter().all(|b| !b.is_empty()));
        });
    }

    #[test]
    fn optimal_sse_two_pairs() {
        let pts: [Point<f64>; 4] = [
            Point::new(0.0, 0.0),
            Point::new(0.0, 0.2),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.8),
        ];
        let (blocks, sse) = optimal_sse(&pts, 2).unwrap();
        assert_eq!(blocks, vec![vec![0, 1], vec![2, 3]]);
        assert!((sse - 0.04).abs() < 1e-12);
    }
}
