//! Mixed energy communities by two-threshold agglomeration.
//!
//! A community admits a unit (a microgrid, or a whole community in merge
//! rounds) when the NE distance between the community's aggregate series and
//! the unit's series is within `eps_ne` (normalized) and the spatial distance
//! between their centroids is within `eps_sp`. Rounds repeat over the
//! communities of the previous round until one performs no merge.

use log::warn;

use crate::energy::{ne_distance_unchecked, NeNormalizer};
use crate::error::{Error, Result};
use crate::geometry::{CentroidAccumulator, Metric};
use crate::model::{add_series, Assignment, CommunityKind, Fleet, MicrogridId, MilliWatts};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MecConfig {
    /// Normalized NE-distance threshold in `[0, 1]`.
    pub eps_ne: f64,
    /// Normalized spatial-distance threshold in `[0, 1]`.
    pub eps_sp: f64,
    pub metric: Metric,
    /// Seed for the sampled normalization divisor on very large fleets.
    pub seed: u64,
}

impl MecConfig {
    pub fn new(eps_ne: f64, eps_sp: f64) -> Self {
        Self {
            eps_ne,
            eps_sp,
            metric: Metric::Euclidean,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps", self.eps_ne), ("eps'", self.eps_sp)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// One admission: `absorbed` joined `host`, both positions in the unit list
/// of `round` (round 0 units are microgrids in index order).
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionRecord {
    pub round: usize,
    pub host: usize,
    pub absorbed: usize,
    /// Fleet indices carried by the absorbed unit.
    pub members: Vec<usize>,
    pub ne_raw: i64,
    pub ne_dist: f64,
    pub sp_dist: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdmissionLog {
    pub records: Vec<AdmissionRecord>,
    pub rounds: usize,
}

/// CSV row: final community label of the host plus one absorbed microgrid.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdmissionRow {
    pub community_id: u32,
    pub microgrid_id: MicrogridId,
    pub round: usize,
    pub ne_dist: f64,
    pub sp_dist: f64,
}

impl AdmissionLog {
    pub fn rows<F: Scalar>(&self, fleet: &Fleet<F>, assignment: &Assignment<F>) -> Vec<AdmissionRow> {
        let labels = assignment.labels(fleet.len());
        let mut rows = Vec::new();
        for r in &self.records {
            for &i in &r.members {
                let community_id = labels[i].map_or(u32::MAX, |j| assignment.communities[j].id);
                rows.push(AdmissionRow {
                    community_id,
                    microgrid_id: fleet.id(i),
                    round: r.round,
                    ne_dist: r.ne_dist,
                    sp_dist: r.sp_dist,
                });
            }
        }
        rows
    }
}

#[derive(Debug, Clone)]
struct Unit<F> {
    members: Vec<usize>,
    aggregate: Vec<MilliWatts>,
    centroid: CentroidAccumulator<F>,
}

pub fn discover_mec<F: Scalar>(fleet: &Fleet<F>, cfg: &MecConfig) -> Result<(Assignment<F>, AdmissionLog)> {
    cfg.validate()?;
    let normalizer = NeNormalizer::for_fleet(fleet, cfg.seed);
    discover_mec_with(fleet, cfg, &normalizer)
}

/// Same as [`discover_mec`] with a precomputed normalization divisor, so
/// sweeps over thresholds share one divisor.
pub fn discover_mec_with<F: Scalar>(
    fleet: &Fleet<F>,
    cfg: &MecConfig,
    normalizer: &NeNormalizer,
) -> Result<(Assignment<F>, AdmissionLog)> {
    cfg.validate()?;
    if !has_opposite_pair(fleet) {
        warn!("no two microgrids have opposite net energy at any timestamp; grouping is effectively homogeneous");
    }
    let mut units: Vec<Unit<F>> = (0..fleet.len())
        .map(|i| Unit {
            members: vec![i],
            aggregate: fleet.series(i).to_vec(),
            centroid: CentroidAccumulator::of(fleet.location(i)),
        })
        .collect();
    let mut log = AdmissionLog::default();
    let eps_sp = F::of(cfg.eps_sp);
    for round in 0.. {
        let before = log.records.len();
        units = agglomerate(units, round, cfg, eps_sp, normalizer, &mut log);
        log.rounds = round + 1;
        if log.records.len() == before {
            break;
        }
    }
    let groups = units.into_iter().map(|u| u.members).collect();
    let assignment = Assignment::from_groups(fleet, CommunityKind::Mec, groups, Vec::new())
        .with_provenance("algorithm", "mec")
        .with_provenance("eps", cfg.eps_ne)
        .with_provenance("eps_sp", cfg.eps_sp)
        .with_provenance("ne_divisor_mw", normalizer.divisor())
        .with_provenance("ne_divisor_sampled", normalizer.is_sampled());
    Ok((assignment, log))
}

fn agglomerate<F: Scalar>(
    units: Vec<Unit<F>>,
    round: usize,
    cfg: &MecConfig,
    eps_sp: F,
    normalizer: &NeNormalizer,
    log: &mut AdmissionLog,
) -> Vec<Unit<F>> {
    let n = units.len();
    let mut grouped = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        if grouped[i] {
            continue;
        }
        grouped[i] = true;
        let mut host = units[i].clone();
        for k in i + 1..n {
            if grouped[k] {
                continue;
            }
            let cand = &units[k];
            let sp = host.centroid.centroid().distance(&cand.centroid.centroid(), cfg.metric);
            if sp > eps_sp {
                continue;
            }
            let ne = ne_distance_unchecked(&host.aggregate, &cand.aggregate);
            if !normalizer.within(ne, cfg.eps_ne) {
                continue;
            }
            grouped[k] = true;
            log.records.push(AdmissionRecord {
                round,
                host: i,
                absorbed: k,
                members: cand.members.clone(),
                ne_raw: ne,
                ne_dist: normalizer.normalize(ne),
                sp_dist: sp.as_f64(),
            });
            host.members.extend_from_slice(&cand.members);
            add_series(&mut host.aggregate, &cand.aggregate);
            host.centroid.merge(&cand.centroid);
        }
        out.push(host);
    }
    out
}

fn has_opposite_pair<F: Scalar>(fleet: &Fleet<F>) -> bool {
    (0..fleet.timestamps()).any(|t| {
        let mut pos = false;
        let mut neg = false;
        for i in 0..fleet.len() {
            let e = fleet.series(i)[t];
            pos |= e > 0;
            neg |= e < 0;
        }
        pos && neg
    })
}

/// `(max_t |E_j(t)|, mean_t |E_j(t)|)` per community.
pub fn balance_report<F: Scalar>(assignment: &Assignment<F>) -> Vec<(MilliWatts, f64)> {
    assignment
        .communities
        .iter()
        .map(|c| {
            let max = c.peak_magnitude();
            let mean = c.aggregate.iter().map(|e| e.abs() as f64).sum::<f64>() / c.aggregate.len().max(1) as f64;
            (max, mean)
        })
        .collect()
}

/// Microgrids farther than `eps_sp` from their community centroid.
///
/// Merge rounds compare centroids only, so members of merged communities can
/// end up outside the radius; this reports them.
pub fn centroid_radius_violations<F: Scalar>(
    fleet: &Fleet<F>,
    assignment: &Assignment<F>,
    eps_sp: f64,
    metric: Metric,
) -> Vec<MicrogridId> {
    let eps = F::of(eps_sp);
    let mut out = Vec::new();
    for c in &assignment.communities {
        for &i in &c.members {
            if fleet.location(i).distance(&c.centroid, metric) > eps {
                out.push(fleet.id(i));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::ne_distance;
    use crate::geometry::Point;
    use crate::model::MicrogridRecord;

    fn fleet(v: &[((f64, f64), Vec<i64>)]) -> Fleet<f64> {
        Fleet::new(
            v.iter()
                .enumerate()
                .map(|(i, ((x, y), s))| MicrogridRecord {
                    id: MicrogridId(i as u32),
                    location: Point::new(*x, *y),
                    series: s.clone(),
                })
                .collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn complementary_pair_merges() {
        let f = fleet(&[((0.5, 0.5), vec![10, -10]), ((0.51, 0.5), vec![-10, 10])]);
        let (a, log) = discover_mec(&f, &MecConfig::new(0.05, 0.05)).unwrap();
        assert_eq!(a.communities.len(), 1);
        assert_eq!(a.communities[0].aggregate, vec![0, 0]);
        assert_eq!(log.records[0].ne_dist, 0.0);
    }

    #[test]
    fn spatial_threshold_blocks() {
        let f = fleet(&[((0.5, 0.5), vec![10, -10]), ((0.51, 0.5), vec![-10, 10])]);
        let (a, log) = discover_mec(&f, &MecConfig::new(0.05, 0.001)).unwrap();
        assert_eq!(a.communities.len(), 2);
        assert!(log.records.is_empty());
    }

    #[test]
    fn aggregate_is_tested_against_each_candidate() {
        // divisor fixed at 6: raw threshold 0.2 * 6 = 1.2
        let f = fleet(&[((0.5, 0.5), vec![4]), ((0.5, 0.5), vec![-3]), ((0.5, 0.5), vec![-2])]);
        let norm = NeNormalizer::with_divisor(6);
        let (a, log) = discover_mec_with(&f, &MecConfig::new(0.2, 1.0), &norm).unwrap();
        assert_eq!(a.communities.len(), 1);
        assert_eq!(a.communities[0].aggregate, vec![-1]);
        assert_eq!(log.records.len(), 2);
        assert_eq!(log.records[0].ne_raw, 1);
        assert_eq!(log.records[1].ne_raw, 1);
    }

    #[test]
    fn fleet_divisor_is_max_pair() {
        let f = fleet(&[((0.5, 0.5), vec![4]), ((0.5, 0.5), vec![-3]), ((0.5, 0.5), vec![-2])]);
        assert_eq!(NeNormalizer::for_fleet(&f, 0).divisor(), 5);
    }

    #[test]
    fn merge_rounds_combine_communities() {
        // round 0 forms (0,1) and (2,3); their balanced centroids merge in round 1
        let f = fleet(&[
            ((0.10, 0.5), vec![5]),
            ((0.20, 0.5), vec![-5]),
            ((0.30, 0.5), vec![6]),
            ((0.40, 0.5), vec![-6]),
        ]);
        let norm = NeNormalizer::with_divisor(12);
        let (a, log) = discover_mec_with(&f, &MecConfig::new(0.1, 0.21), &norm).unwrap();
        assert_eq!(a.communities.len(), 1);
        assert!(log.rounds >= 2);
        assert!(log.records.iter().any(|r| r.round == 1));
    }

    #[test]
    fn balance_examples() {
        let f1 = fleet(&[((0.0, 0.0), vec![3, -1])]);
        let a = Assignment::from_groups(&f1, CommunityKind::Mec, vec![vec![0]], vec![]);
        assert_eq!(balance_report(&a), vec![(3, 2.0)]);
        let f2 = fleet(&[((0.0, 0.0), vec![-5])]);
        let a = Assignment::from_groups(&f2, CommunityKind::Mec, vec![vec![0]], vec![]);
        assert_eq!(balance_report(&a), vec![(5, 5.0)]);
        let f3 = fleet(&[((0.0, 0.0), vec![1, -2, 3]), ((0.0, 0.0), vec![-1, 2, -3])]);
        let a = Assignment::from_groups(&f3, CommunityKind::Mec, vec![vec![0, 1]], vec![]);
        assert_eq!(balance_report(&a), vec![(0, 0.0)]);
    }

    #[test]
    fn thresholds_validated() {
        let f = fleet(&[((0.0, 0.0), vec![1])]);
        assert!(discover_mec(&f, &MecConfig::new(1.5, 0.1)).is_err());
        assert!(discover_mec(&f, &MecConfig::new(0.1, -0.1)).is_err());
    }

    #[test]
    fn log_replay_is_sound() {
        let mut recs = Vec::new();
        for i in 0..40u32 {
            let x = (i as f64 * 0.137).fract();
            let y = (i as f64 * 0.291).fract();
            let s: Vec<i64> = (0..4).map(|t| ((i as i64 * 37 + t * 11) % 23) - 11).map(|v| if v == 0 { 1 } else { v }).collect();
            recs.push(((x, y), s));
        }
        let f = fleet(&recs);
        let cfg = MecConfig::new(0.3, 0.25);
        let norm = NeNormalizer::for_fleet(&f, 0);
        let (a, log) = discover_mec_with(&f, &cfg, &norm).unwrap();
        assert!(a.validate(&f).is_ok());

        // rebuild unit lists round by round and recompute each admission
        let mut units: Vec<Vec<usize>> = (0..f.len()).map(|i| vec![i]).collect();
        for round in 0..log.rounds {
            let mut hosts: Vec<Option<Vec<usize>>> = units.iter().cloned().map(Some).collect();
            for r in log.records.iter().filter(|r| r.round == round) {
                let host = hosts[r.host].clone().unwrap();
                let agg = crate::model::aggregate(&f, host.iter().copied());
                let cand = crate::model::aggregate(&f, units[r.absorbed].iter().copied());
                let ne = ne_distance(&agg, &cand).unwrap();
                assert_eq!(ne, r.ne_raw);
                assert!(norm.within(ne, cfg.eps_ne));
                let hc = Point::mean(host.iter().map(|&i| &f.microgrids()[i].location)).unwrap();
                let cc = Point::mean(units[r.absorbed].iter().map(|&i| &f.microgrids()[i].location)).unwrap();
                let sp = hc.distance(&cc, Metric::Euclidean);
                assert!((sp - r.sp_dist).abs() < 1e-12);
                assert!(r.sp_dist <= cfg.eps_sp);
                assert_eq!(r.members, units[r.absorbed]);
                hosts[r.host].as_mut().unwrap().extend_from_slice(&units[r.absorbed]);
                hosts[r.absorbed] = None;
            }
            units = hosts.into_iter().flatten().collect();
        }
        assert_eq!(units.len(), a.communities.len());
        // each microgrid absorbed at most once per round
        for round in 0..log.rounds {
            let mut seen = std::collections::HashSet::new();
            for r in log.records.iter().filter(|r| r.round == round) {
                for &m in &r.members {
                    assert!(seen.insert(m));
                }
            }
        }
    }
}
