use super::KRange;
use crate::error::{Error, Result};
use crate::geometry::{CentroidAccumulator, Metric, Point};
use crate::kmeans::{kmeans, Clustering, KMeansConfig};
use crate::model::{add_series, Assignment, CommunityKind, Fleet, MilliWatts};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseConfig {
    /// Candidate K values for the first phase; derived from `|M+|` when unset.
    pub k_range: Option<KRange>,
    /// Every aggregate must stay at or above this value, milliwatts.
    pub margin_mw: MilliWatts,
    pub seed: u64,
    pub metric: Metric,
}

impl TwoPhaseConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            k_range: None,
            margin_mw: 0,
            seed,
            metric: Metric::Euclidean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.margin_mw < 0 {
            return Err(Error::InvalidConfig("margin must be nonnegative".into()));
        }
        match &self.k_range {
            Some(r) => r.validate(),
            None => Ok(()),
        }
    }
}

/// `ceil(|M+|/200) ..= ceil(|M+|/50)` in about ten steps.
pub fn default_k_range(positives: usize) -> KRange {
    let min = positives.div_ceil(200).max(1);
    let max = positives.div_ceil(50).max(min);
    let step = (max - min).div_ceil(10).max(1);
    KRange::new(min, max, step)
}

/// Two-phase SEC discovery.
///
/// Phase one clusters the always-positive microgrids by location, keeping the
/// K with least spatial SSE. Phase two visits clusters in order and keeps
/// admitting the nearest ungrouped microgrid with a negative reading while
/// every aggregate stays at or above the margin; the first rejection closes
/// the cluster. Microgrids never admitted stay unassigned.
pub fn discover_sec_twophase<F: Scalar>(fleet: &Fleet<F>, cfg: &TwoPhaseConfig) -> Result<Assignment<F>> {
    cfg.validate()?;
    let positives = fleet.positive_indices();
    if positives.is_empty() {
        return Err(Error::NoPositiveMicrogrids);
    }
    let negatives = fleet.non_positive_indices();
    let range = cfg.k_range.unwrap_or_else(|| default_k_range(positives.len()));
    let points: Vec<Point<F>> = positives.iter().map(|&i| fleet.location(i)).collect();

    let mut best: Option<(usize, Clustering<F>)> = None;
    for k in range.values().into_iter().filter(|&k| k <= positives.len()) {
        let c = kmeans(&points, &KMeansConfig::new(k, cfg.seed))?;
        if best.as_ref().is_none_or(|(_, b)| c.sse < b.sse) {
            best = Some((k, c));
        }
    }
    let Some((k, clustering)) = best else {
        return Err(Error::InvalidK {
            k: range.min,
            n: positives.len(),
        });
    };

    let mut groups: Vec<Vec<usize>> = clustering
        .groups()
        .into_iter()
        .map(|g| g.into_iter().map(|p| positives[p]).collect())
        .collect();
    let mut taken = vec![false; negatives.len()];
    for group in &mut groups {
        let mut acc = CentroidAccumulator::new();
        let mut agg = vec![0; fleet.timestamps()];
        for &i in group.iter() {
            acc.add(fleet.location(i));
            add_series(&mut agg, fleet.series(i));
        }
        loop {
            let centroid = acc.centroid();
            let nearest = negatives
                .iter()
                .enumerate()
                .filter(|(n, _)| !taken[*n])
                .map(|(n, &i)| (fleet.location(i).distance(&centroid, cfg.metric), n))
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
            let Some((_, n)) = nearest else {
                break;
            };
            let i = negatives[n];
            let admissible = agg
                .iter()
                .zip(fleet.series(i))
                .all(|(&a, &e)| a + e >= cfg.margin_mw);
            if !admissible {
                break;
            }
            taken[n] = true;
            add_series(&mut agg, fleet.series(i));
            acc.add(fleet.location(i));
            group.push(i);
        }
    }
    let unassigned: Vec<usize> = negatives
        .iter()
        .zip(&taken)
        .filter(|(_, &t)| !t)
        .map(|(&i, _)| i)
        .collect();

    Ok(Assignment::from_groups(fleet, CommunityKind::Sec, groups, unassigned)
        .with_provenance("algorithm", "sec-twophase")
        .with_provenance("k", k)
        .with_provenance("margin_mw", cfg.margin_mw)
        .with_provenance("seed", cfg.seed))
}
