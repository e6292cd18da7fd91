//! Homogeneous energy communities: fixed-K spatial clustering and the
//! net-energy-bounded density scan (L^t-DBSCAN).

use crate::error::{Error, Result};
use crate::geometry::{CentroidAccumulator, Metric, Point};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::model::{add_series, Assignment, Community, CommunityKind, Fleet, MilliWatts, SignProfile};
use crate::scalar::Scalar;

/// Groups a homogeneous fleet into exactly `cfg.k` communities by location.
pub fn discover_hec_kmeans<F: Scalar>(fleet: &Fleet<F>, cfg: &KMeansConfig) -> Result<Assignment<F>> {
    fleet.require_homogeneous()?;
    if cfg.k == 0 || cfg.k > fleet.len() {
        return Err(Error::InvalidK { k: cfg.k, n: fleet.len() });
    }
    let clustering = kmeans(&fleet.locations(), cfg)?;
    Ok(Assignment::from_groups(fleet, CommunityKind::Hec, clustering.groups(), Vec::new())
        .with_provenance("algorithm", "hec-kmeans")
        .with_provenance("k", cfg.k)
        .with_provenance("seed", cfg.seed)
        .with_provenance("restarts", cfg.restarts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupplyKind {
    /// Negative fleet: generation that must be placed for each community.
    ExternalDemand,
    /// Positive fleet: storage needed to absorb each community's surplus.
    BankCapacity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequiredSupply {
    pub kind: SupplyKind,
    /// `max_t |E_j(t)|` per community, milliwatts.
    pub per_community: Vec<MilliWatts>,
}

pub fn required_supply<F: Scalar>(assignment: &Assignment<F>) -> RequiredSupply {
    let positive = assignment
        .communities
        .iter()
        .flat_map(|c| c.aggregate.iter())
        .all(|&e| e > 0);
    let kind = if positive && !assignment.communities.is_empty() {
        SupplyKind::BankCapacity
    } else {
        SupplyKind::ExternalDemand
    };
    RequiredSupply {
        kind,
        per_community: assignment.communities.iter().map(|c| c.peak_magnitude()).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtDbscanConfig {
    /// Normalized neighborhood radius.
    pub eps: f64,
    /// Neighbors (excluding itself) a microgrid needs to be a core microgrid.
    pub min_neighbors: usize,
    /// Bound `L` on `|E_j(t)|`, milliwatts.
    pub bound: MilliWatts,
    pub metric: Metric,
}

impl LtDbscanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::InvalidConfig(format!("eps must lie in (0, 1], got {}", self.eps)));
        }
        if self.min_neighbors < 1 {
            return Err(Error::InvalidConfig("min must be at least 1".into()));
        }
        if self.bound <= 0 {
            return Err(Error::InvalidConfig(format!("bound L must be positive, got {}", self.bound)));
        }
        Ok(())
    }
}

struct Group<F> {
    members: Vec<usize>,
    aggregate: Vec<MilliWatts>,
    centroid: CentroidAccumulator<F>,
}

impl<F: Scalar> Group<F> {
    fn open(fleet: &Fleet<F>, i: usize) -> Self {
        Self {
            members: vec![i],
            aggregate: fleet.series(i).to_vec(),
            centroid: CentroidAccumulator::of(fleet.location(i)),
        }
    }

    fn admits(&self, series: &[MilliWatts], bound: MilliWatts) -> bool {
        self.aggregate
            .iter()
            .zip(series)
            .all(|(a, e)| a.abs() + e.abs() <= bound)
    }

    fn add(&mut self, fleet: &Fleet<F>, i: usize) {
        self.members.push(i);
        add_series(&mut self.aggregate, fleet.series(i));
        self.centroid.add(fleet.location(i));
    }
}

fn neighbor_lists<F: Scalar>(fleet: &Fleet<F>, eps: F, metric: Metric) -> Vec<Vec<usize>> {
    let locs = fleet.locations();
    let n = locs.len();
    let mut lists = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if locs[i].distance(&locs[j], metric) <= eps {
                lists[i].push(j);
                lists[j].push(i);
            }
        }
    }
    for l in &mut lists {
        l.sort_unstable();
    }
    lists
}

/// Density scan that caps every community's `|E_j(t)|` at `L` for all `t`.
///
/// Microgrids are scanned in ascending id order. A core microgrid opens a
/// community and expands through its neighborhood; a neighbor is admitted
/// only while `max_t(|E_j(t)| + |e_k(t)|) <= L`, and the first rejection
/// closes the community. Microgrids never reached are outliers: each joins the
/// nearest community it neighbors whose bound still holds, and the rest are
/// grouped greedily by id among themselves. A single microgrid that alone
/// exceeds `L` ends up as a flagged singleton.
pub fn discover_hec_ldbscan<F: Scalar>(fleet: &Fleet<F>, cfg: &LtDbscanConfig) -> Result<Assignment<F>> {
    cfg.validate()?;
    fleet.require_homogeneous()?;
    let n = fleet.len();
    let eps = F::of(cfg.eps);
    let neighbors = neighbor_lists(fleet, eps, cfg.metric);
    let is_core = |i: usize| neighbors[i].len() >= cfg.min_neighbors;

    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<Group<F>> = Vec::new();
    let mut queued_stamp = vec![usize::MAX; n];

    for seed in 0..n {
        if label[seed].is_some() || !is_core(seed) {
            continue;
        }
        let j = groups.len();
        groups.push(Group::open(fleet, seed));
        label[seed] = Some(j);
        queued_stamp[seed] = j;
        let mut frontier: Vec<usize> = Vec::new();
        for &q in &neighbors[seed] {
            queued_stamp[q] = j;
            frontier.push(q);
        }
        let mut pos = 0;
        while pos < frontier.len() {
            let k = frontier[pos];
            pos += 1;
            if label[k].is_some() {
                continue;
            }
            if !groups[j].admits(fleet.series(k), cfg.bound) {
                break;
            }
            groups[j].add(fleet, k);
            label[k] = Some(j);
            if is_core(k) {
                for &q in &neighbors[k] {
                    if queued_stamp[q] != j {
                        queued_stamp[q] = j;
                        frontier.push(q);
                    }
                }
            }
        }
    }

    // outliers join the nearest adjacent community that stays within the bound
    let main_groups = groups.len();
    let mut leftover = Vec::new();
    for o in 0..n {
        if label[o].is_some() {
            continue;
        }
        let loc = fleet.location(o);
        let mut candidates: Vec<usize> = neighbors[o]
            .iter()
            .filter_map(|&q| label[q])
            .filter(|&j| j < main_groups)
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        candidates.sort_by(|&a, &b| {
            let da = groups[a].centroid.centroid().distance(&loc, cfg.metric);
            let db = groups[b].centroid.centroid().distance(&loc, cfg.metric);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
        match candidates.into_iter().find(|&j| groups[j].admits(fleet.series(o), cfg.bound)) {
            Some(j) => {
                groups[j].add(fleet, o);
                label[o] = Some(j);
            }
            None => leftover.push(o),
        }
    }

    // remaining outliers form new communities, opener first by id
    for (pos, &o) in leftover.iter().enumerate() {
        if label[o].is_some() {
            continue;
        }
        let j = groups.len();
        groups.push(Group::open(fleet, o));
        label[o] = Some(j);
        let opener: Point<F> = fleet.location(o);
        for &q in &leftover[pos + 1..] {
            if label[q].is_none()
                && fleet.location(q).distance(&opener, cfg.metric) <= eps
                && groups[j].admits(fleet.series(q), cfg.bound)
            {
                groups[j].add(fleet, q);
                label[q] = Some(j);
            }
        }
    }

    let mut assignment = Assignment::from_groups(
        fleet,
        CommunityKind::Hec,
        groups.into_iter().map(|g| g.members).collect(),
        Vec::new(),
    );
    assignment.flagged = assignment
        .communities
        .iter()
        .filter(|c| c.len() == 1 && c.peak_magnitude() > cfg.bound)
        .map(|c| c.id)
        .collect();
    Ok(assignment
        .with_provenance("algorithm", "hec-ldbscan")
        .with_provenance("eps", cfg.eps)
        .with_provenance("min", cfg.min_neighbors)
        .with_provenance("bound_mw", cfg.bound))
}

/// Communities (other than flagged singletons) whose `|E_j(t)|` exceeds `bound`.
pub fn bound_violations<F: Scalar>(assignment: &Assignment<F>, bound: MilliWatts) -> Vec<&Community<F>> {
    assignment
        .communities
        .iter()
        .filter(|c| c.len() >= 2 || !assignment.flagged.contains(&c.id))
        .filter(|c| c.peak_magnitude() > bound)
        .collect()
}

/// Whether every community shares the fleet's single sign profile.
pub fn is_homogeneous<F: Scalar>(fleet: &Fleet<F>, assignment: &Assignment<F>) -> bool {
    let Some(sign) = fleet.homogeneous_sign() else {
        return false;
    };
    assignment.communities.iter().all(|c| {
        c.members.iter().all(|&i| fleet.sign(i) == sign)
            && match sign {
                SignProfile::AllPositive => c.aggregate.iter().all(|&e| e > 0),
                SignProfile::AllNegative => c.aggregate.iter().all(|&e| e < 0),
                SignProfile::Mixed => false,
            }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MicrogridId, MicrogridRecord};

    fn fleet(v: &[((f64, f64), Vec<i64>)]) -> Fleet<f64> {
        Fleet::new(
            v.iter()
                .enumerate()
                .map(|(i, ((x, y), s))| MicrogridRecord {
                    id: MicrogridId(i as u32 + 1),
                    location: Point::new(*x, *y),
                    series: s.clone(),
                })
                .collect(),
            0,
        )
        .unwrap()
    }

    fn member_ids(f: &Fleet<f64>, a: &Assignment<f64>) -> Vec<Vec<u32>> {
        let mut v: Vec<Vec<u32>> = a
            .communities
            .iter()
            .map(|c| c.members.iter().map(|&i| f.id(i).0).collect())
            .collect();
        v.sort();
        v
    }

    #[test]
    fn kmeans_splits_two_pairs() {
        let f = fleet(&[
            ((0.0, 0.0), vec![-1]),
            ((0.0, 0.1), vec![-1]),
            ((1.0, 1.0), vec![-1]),
            ((1.0, 0.9), vec![-1]),
        ]);
        let a = discover_hec_kmeans(&f, &KMeansConfig::new(2, 3)).unwrap();
        assert_eq!(member_ids(&f, &a), vec![vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn kmeans_single_community_aggregates_fleet() {
        let f = fleet(&[((0.0, 0.0), vec![-1, -2]), ((0.5, 0.1), vec![-3, -4]), ((1.0, 1.0), vec![-5, -6])]);
        let a = discover_hec_kmeans(&f, &KMeansConfig::new(1, 0)).unwrap();
        assert_eq!(a.communities[0].aggregate, f.total_series());
    }

    #[test]
    fn kmeans_rejects_mixed_and_oversized_k() {
        let mixed = fleet(&[((0.0, 0.0), vec![-1]), ((0.5, 0.1), vec![2])]);
        assert!(matches!(discover_hec_kmeans(&mixed, &KMeansConfig::new(1, 0)), Err(Error::NotHomogeneous { .. })));
        let neg = fleet(&[((0.0, 0.0), vec![-1])]);
        assert!(matches!(discover_hec_kmeans(&neg, &KMeansConfig::new(2, 0)), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn required_supply_examples() {
        let f = fleet(&[((0.0, 0.0), vec![-100, -250, -180])]);
        let a = Assignment::from_groups(&f, CommunityKind::Hec, vec![vec![0]], vec![]);
        assert_eq!(required_supply(&a).per_community, vec![250]);

        let f = fleet(&[((0.0, 0.0), vec![-10, -30]), ((0.0, 0.0), vec![-30, -10])]);
        let a = Assignment::from_groups(&f, CommunityKind::Hec, vec![vec![0, 1]], vec![]);
        let r = required_supply(&a);
        assert_eq!(r.per_community, vec![40]);
        assert_eq!(r.kind, SupplyKind::ExternalDemand);

        let f = fleet(&[((0.0, 0.0), vec![40, 40])]);
        let a = Assignment::from_groups(&f, CommunityKind::Hec, vec![vec![0]], vec![]);
        assert_eq!(required_supply(&a).kind, SupplyKind::BankCapacity);
    }

    fn cfg(eps: f64, min: usize, bound: i64) -> LtDbscanConfig {
        LtDbscanConfig {
            eps,
            min_neighbors: min,
            bound,
            metric: Metric::Euclidean,
        }
    }

    #[test]
    fn bound_closes_community() {
        let f = fleet(&[((0.5, 0.5), vec![-40]), ((0.51, 0.5), vec![-40]), ((0.5, 0.51), vec![-40])]);
        let a = discover_hec_ldbscan(&f, &cfg(0.1, 1, 100)).unwrap();
        assert_eq!(member_ids(&f, &a), vec![vec![1, 2], vec![3]]);
        assert!(bound_violations(&a, 100).is_empty());
    }

    #[test]
    fn loose_bound_gives_one_community() {
        let f = fleet(&[((0.5, 0.5), vec![-40, -1]), ((0.51, 0.5), vec![-40, -2]), ((0.5, 0.51), vec![-40, -3])]);
        let a = discover_hec_ldbscan(&f, &cfg(0.1, 1, 120)).unwrap();
        assert_eq!(member_ids(&f, &a), vec![vec![1, 2, 3]]);
    }

    #[test]
    fn isolated_microgrid_is_a_singleton() {
        let f = fleet(&[((0.0, 0.0), vec![-1]), ((0.01, 0.0), vec![-1]), ((0.0, 0.01), vec![-1]), ((0.9, 0.9), vec![-1])]);
        let a = discover_hec_ldbscan(&f, &cfg(0.1, 1, 1000)).unwrap();
        assert_eq!(member_ids(&f, &a), vec![vec![1, 2, 3], vec![4]]);
    }

    #[test]
    fn border_outlier_joins_adjacent_community() {
        // 4 is within eps of 3 only; with min=2 it is not core and is reached as a border point
        let f = fleet(&[
            ((0.0, 0.0), vec![-1]),
            ((0.05, 0.0), vec![-1]),
            ((0.1, 0.0), vec![-1]),
            ((0.19, 0.0), vec![-1]),
        ]);
        let a = discover_hec_ldbscan(&f, &cfg(0.1, 2, 1000)).unwrap();
        assert_eq!(member_ids(&f, &a), vec![vec![1, 2, 3, 4]]);
    }

    #[test]
    fn oversized_microgrid_is_flagged() {
        let f = fleet(&[((0.0, 0.0), vec![-500]), ((0.01, 0.0), vec![-10]), ((0.0, 0.01), vec![-10])]);
        let a = discover_hec_ldbscan(&f, &cfg(0.1, 1, 100)).unwrap();
        assert_eq!(a.flagged.len(), 1);
        let flagged = a.communities.iter().find(|c| c.id == a.flagged[0]).unwrap();
        assert_eq!(flagged.members, vec![0]);
        assert!(bound_violations(&a, 100).is_empty());
        assert!(a.validate(&f).is_ok());
    }

    #[test]
    fn invalid_config_rejected() {
        let f = fleet(&[((0.0, 0.0), vec![-1])]);
        assert!(discover_hec_ldbscan(&f, &cfg(0.0, 1, 10)).is_err());
        assert!(discover_hec_ldbscan(&f, &cfg(0.1, 0, 10)).is_err());
        assert!(discover_hec_ldbscan(&f, &cfg(0.1, 1, 0)).is_err());
    }
}
