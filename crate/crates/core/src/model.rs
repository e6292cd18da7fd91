//! Fleet, community and assignment types shared by every discovery algorithm.
//!
//! Net energy is stored as integer milliwatts so that community aggregates are
//! exact and independent of summation order.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::{CentroidAccumulator, Point};
use crate::scalar::Scalar;

/// Net energy reading in milliwatts. Positive is surplus, negative is demand.
pub type MilliWatts = i64;

pub const MW_PER_WATT: i64 = 1000;

pub fn watts_to_mw(w: f64) -> MilliWatts {
    (w * MW_PER_WATT as f64).round() as MilliWatts
}

pub fn mw_to_watts(mw: MilliWatts) -> f64 {
    mw as f64 / MW_PER_WATT as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct MicrogridId(pub u32);

impl fmt::Display for MicrogridId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignProfile {
    AllPositive,
    AllNegative,
    Mixed,
}

impl SignProfile {
    pub fn of(series: &[MilliWatts]) -> Self {
        if series.iter().all(|&e| e > 0) {
            SignProfile::AllPositive
        } else if series.iter().all(|&e| e < 0) {
            SignProfile::AllNegative
        } else {
            SignProfile::Mixed
        }
    }
}

/// Contiguous range of timestamp indices `[start, start + len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub len: usize,
}

impl Window {
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Microgrid<F> {
    pub id: MicrogridId,
    /// Normalized coordinates in `[0, 1] x [0, 1]`.
    pub location: Point<F>,
    /// Original coordinates when the fleet was built from raw positions.
    pub raw_location: Option<Point<F>>,
}

/// Input record for building a fleet.
#[derive(Debug, Clone)]
pub struct MicrogridRecord<F> {
    pub id: MicrogridId,
    pub location: Point<F>,
    pub series: Vec<MilliWatts>,
}

/// Immutable set of microgrids with a shared net-energy window.
///
/// Microgrids are stored in ascending id order; algorithm code addresses them
/// by that position ("index"), never by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet<F> {
    microgrids: Vec<Microgrid<F>>,
    energy: Vec<MilliWatts>,
    signs: Vec<SignProfile>,
    window: Window,
}

impl<F: Scalar> Fleet<F> {
    /// Builds a fleet from already-normalized locations.
    pub fn new(records: Vec<MicrogridRecord<F>>, window_start: usize) -> Result<Self> {
        for r in &records {
            let ok = |v: F| v.is_finite() && v >= F::zero() && v <= F::one();
            if !ok(r.location.x) || !ok(r.location.y) {
                return Err(Error::InvalidConfig(format!(
                    "microgrid {} location ({}, {}) is outside the unit square",
                    r.id, r.location.x, r.location.y
                )));
            }
        }
        Self::assemble(records, window_start, false)
    }

    /// Builds a fleet from raw coordinates, min-max normalizing each axis.
    pub fn from_raw(records: Vec<MicrogridRecord<F>>, window_start: usize) -> Result<Self> {
        let fleet = Self::assemble(records, window_start, true)?;
        normalize_fleet(&fleet)
    }

    fn assemble(mut records: Vec<MicrogridRecord<F>>, window_start: usize, raw: bool) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyFleet);
        }
        records.sort_by_key(|r| r.id);
        let len = records[0].series.len();
        if len == 0 {
            return Err(Error::InvalidConfig("net-energy window must hold at least one reading".into()));
        }
        let mut energy = Vec::with_capacity(records.len() * len);
        let mut microgrids = Vec::with_capacity(records.len());
        let mut signs = Vec::with_capacity(records.len());
        let mut prev: Option<MicrogridId> = None;
        for r in records {
            if prev == Some(r.id) {
                return Err(Error::DuplicateId(r.id));
            }
            prev = Some(r.id);
            if r.series.len() != len {
                return Err(Error::WindowMismatch {
                    id: r.id,
                    expected: len,
                    found: r.series.len(),
                });
            }
            if let Some(t) = r.series.iter().position(|&e| e == 0) {
                return Err(Error::InvalidConfig(format!(
                    "microgrid {} has zero net energy at t={t}",
                    r.id
                )));
            }
            if !r.location.x.is_finite() || !r.location.y.is_finite() {
                return Err(Error::InvalidConfig(format!("microgrid {} has a non-finite location", r.id)));
            }
            signs.push(SignProfile::of(&r.series));
            energy.extend_from_slice(&r.series);
            microgrids.push(Microgrid {
                id: r.id,
                location: r.location,
                raw_location: raw.then_some(r.location),
            });
        }
        Ok(Self {
            microgrids,
            energy,
            signs,
            window: Window { start: window_start, len },
        })
    }

    pub fn len(&self) -> usize {
        self.microgrids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.microgrids.is_empty()
    }

    pub fn window(&self) -> Window {
        self.window
    }

    /// Number of timestamps `|t|`.
    pub fn timestamps(&self) -> usize {
        self.window.len
    }

    pub fn microgrids(&self) -> &[Microgrid<F>] {
        &self.microgrids
    }

    pub fn id(&self, index: usize) -> MicrogridId {
        self.microgrids[index].id
    }

    pub fn index_of(&self, id: MicrogridId) -> Option<usize> {
        self.microgrids.binary_search_by_key(&id, |m| m.id).ok()
    }

    pub fn location(&self, index: usize) -> Point<F> {
        self.microgrids[index].location
    }

    pub fn locations(&self) -> Vec<Point<F>> {
        self.microgrids.iter().map(|m| m.location).collect()
    }

    pub fn series(&self, index: usize) -> &[MilliWatts] {
        let len = self.window.len;
        &self.energy[index * len..(index + 1) * len]
    }

    pub fn sign(&self, index: usize) -> SignProfile {
        self.signs[index]
    }

    /// Indices of microgrids positive at every timestamp (`M+`).
    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.signs[i] == SignProfile::AllPositive).collect()
    }

    /// Indices of microgrids with any negative reading (`M-`).
    pub fn non_positive_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.signs[i] != SignProfile::AllPositive).collect()
    }

    /// Fleet-wide sign profile when every microgrid shares one, else `None`.
    pub fn homogeneous_sign(&self) -> Option<SignProfile> {
        let first = self.signs[0];
        (first != SignProfile::Mixed && self.signs.iter().all(|&s| s == first)).then_some(first)
    }

    pub fn require_homogeneous(&self) -> Result<SignProfile> {
        match self.homogeneous_sign() {
            Some(s) => Ok(s),
            None => {
                let first = self.signs[0];
                let bad = self
                    .signs
                    .iter()
                    .position(|&s| s == SignProfile::Mixed || s != first)
                    .unwrap_or(0);
                Err(Error::NotHomogeneous { id: self.id(bad) })
            }
        }
    }

    /// Aggregate of all microgrids per timestamp.
    pub fn total_series(&self) -> Vec<MilliWatts> {
        aggregate(self, 0..self.len())
    }

    /// Counts of (all positive, all negative, mixed) microgrids.
    pub fn sign_census(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in &self.signs {
            match s {
                SignProfile::AllPositive => c.0 += 1,
                SignProfile::AllNegative => c.1 += 1,
                SignProfile::Mixed => c.2 += 1,
            }
        }
        c
    }

    /// Restricts the fleet to the given indices and to the first `len` readings.
    pub fn subset(&self, indices: &[usize], len: usize) -> Result<Self> {
        if len == 0 || len > self.window.len {
            return Err(Error::WindowTooLong {
                window: len,
                available: self.window.len,
            });
        }
        let mut microgrids = Vec::with_capacity(indices.len());
        let mut energy = Vec::with_capacity(indices.len() * len);
        let mut signs = Vec::with_capacity(indices.len());
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.is_empty() {
            return Err(Error::EmptyFleet);
        }
        for &i in &sorted {
            let s = &self.series(i)[..len];
            microgrids.push(self.microgrids[i].clone());
            energy.extend_from_slice(s);
            signs.push(SignProfile::of(s));
        }
        Ok(Self {
            microgrids,
            energy,
            signs,
            window: Window {
                start: self.window.start,
                len,
            },
        })
    }

    /// All microgrids restricted to readings `start..start + len` of the
    /// current window. Zero readings cannot appear, so sign profiles are
    /// recomputed but nobody is dropped.
    pub fn slice_window(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.window.len {
            return Err(Error::WindowTooLong {
                window: start + len,
                available: self.window.len,
            });
        }
        let mut energy = Vec::with_capacity(self.len() * len);
        let mut signs = Vec::with_capacity(self.len());
        for i in 0..self.len() {
            let s = &self.series(i)[start..start + len];
            energy.extend_from_slice(s);
            signs.push(SignProfile::of(s));
        }
        Ok(Self {
            microgrids: self.microgrids.clone(),
            energy,
            signs,
            window: Window {
                start: self.window.start + start,
                len,
            },
        })
    }

    pub fn records(&self) -> Vec<MicrogridRecord<F>> {
        (0..self.len())
            .map(|i| MicrogridRecord {
                id: self.id(i),
                location: self.location(i),
                series: self.series(i).to_vec(),
            })
            .collect()
    }
}

/// Min-max normalizes raw coordinates into the unit square.
///
/// Uses the stored raw coordinates when present, the current locations
/// otherwise. A degenerate axis (all values equal) maps to 0.5.
pub fn normalize_fleet<F: Scalar>(fleet: &Fleet<F>) -> Result<Fleet<F>> {
    if fleet.is_empty() {
        return Err(Error::EmptyFleet);
    }
    let raw: Vec<Point<F>> = fleet
        .microgrids
        .iter()
        .map(|m| m.raw_location.unwrap_or(m.location))
        .collect();
    let normalized = normalize_points(&raw);
    let mut out = fleet.clone();
    for ((m, p), r) in out.microgrids.iter_mut().zip(normalized).zip(raw) {
        m.location = p;
        m.raw_location = Some(r);
    }
    Ok(out)
}

pub fn normalize_points<F: Scalar>(raw: &[Point<F>]) -> Vec<Point<F>> {
    let axis = |get: fn(&Point<F>) -> F| {
        let lo = raw.iter().map(get).fold(F::infinity(), F::min);
        let hi = raw.iter().map(get).fold(F::neg_infinity(), F::max);
        (lo, hi)
    };
    let (x_lo, x_hi) = axis(|p| p.x);
    let (y_lo, y_hi) = axis(|p| p.y);
    let scale = |v: F, lo: F, hi: F| {
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            F::of(0.5)
        }
    };
    raw.iter()
        .map(|p| Point::new(scale(p.x, x_lo, x_hi), scale(p.y, y_lo, y_hi)))
        .collect()
}

/// Per-timestamp sum of the members' series.
pub fn aggregate<F: Scalar>(fleet: &Fleet<F>, members: impl IntoIterator<Item = usize>) -> Vec<MilliWatts> {
    let mut agg = vec![0; fleet.timestamps()];
    for i in members {
        add_series(&mut agg, fleet.series(i));
    }
    agg
}

pub fn add_series(acc: &mut [MilliWatts], series: &[MilliWatts]) {
    for (a, e) in acc.iter_mut().zip(series) {
        *a += e;
    }
}

pub fn sub_series(acc: &mut [MilliWatts], series: &[MilliWatts]) {
    for (a, e) in acc.iter_mut().zip(series) {
        *a -= e;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CommunityKind {
    Hec,
    Mec,
    Sec,
}

impl fmt::Display for CommunityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommunityKind::Hec => "HEC",
            CommunityKind::Mec => "MEC",
            CommunityKind::Sec => "SEC",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Community<F> {
    pub id: u32,
    /// Fleet indices, ascending.
    pub members: Vec<usize>,
    pub centroid: Point<F>,
    /// `E_j(t)`, milliwatts.
    pub aggregate: Vec<MilliWatts>,
}

impl<F: Scalar> Community<F> {
    pub fn from_members(fleet: &Fleet<F>, id: u32, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        let mut acc = CentroidAccumulator::new();
        for &i in &members {
            acc.add(fleet.location(i));
        }
        Self {
            id,
            centroid: acc.centroid(),
            aggregate: aggregate(fleet, members.iter().copied()),
            members,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `max_t |E_j(t)|`.
    pub fn peak_magnitude(&self) -> MilliWatts {
        self.aggregate.iter().map(|e| e.abs()).max().unwrap_or(0)
    }

    pub fn is_self_sufficient(&self) -> bool {
        self.aggregate.iter().all(|&e| e >= 0)
    }
}

/// Partition (or partial partition) of a fleet into communities.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment<F> {
    pub kind: CommunityKind,
    pub communities: Vec<Community<F>>,
    /// Fleet indices left out, ascending.
    pub unassigned: Vec<usize>,
    /// Ids of single-microgrid communities that exceed a configured bound.
    pub flagged: Vec<u32>,
    /// Effective parameters that produced this assignment.
    pub provenance: BTreeMap<String, String>,
}

impl<F: Scalar> Assignment<F> {
    /// Builds communities labelled `0..` in the order given, dropping empty groups.
    pub fn from_groups(fleet: &Fleet<F>, kind: CommunityKind, groups: Vec<Vec<usize>>, mut unassigned: Vec<usize>) -> Self {
        unassigned.sort_unstable();
        let communities = groups
            .into_iter()
            .filter(|g| !g.is_empty())
            .enumerate()
            .map(|(j, g)| Community::from_members(fleet, j as u32, g))
            .collect();
        Self {
            kind,
            communities,
            unassigned,
            flagged: Vec::new(),
            provenance: BTreeMap::new(),
        }
    }

    /// Builds from one label per microgrid; `None` marks an unassigned microgrid.
    pub fn from_labels(fleet: &Fleet<F>, kind: CommunityKind, labels: &[Option<usize>]) -> Self {
        let k = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); k];
        let mut unassigned = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            match l {
                Some(j) => groups[*j].push(i),
                None => unassigned.push(i),
            }
        }
        Self::from_groups(fleet, kind, groups, unassigned)
    }

    pub fn with_provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.insert(key.to_string(), value.to_string());
        self
    }

    pub fn assigned_count(&self) -> usize {
        self.communities.iter().map(|c| c.len()).sum()
    }

    /// Community position per fleet index.
    pub fn labels(&self, n: usize) -> Vec<Option<usize>> {
        let mut labels = vec![None; n];
        for (j, c) in self.communities.iter().enumerate() {
            for &i in &c.members {
                labels[i] = Some(j);
            }
        }
        labels
    }

    /// Checks disjointness, coverage, and that stored aggregates and centroids
    /// match a recomputation from members.
    pub fn validate(&self, fleet: &Fleet<F>) -> std::result::Result<(), String> {
        let mut seen = HashSet::new();
        for c in &self.communities {
            if c.members.is_empty() {
                return Err(format!("community {} is empty", c.id));
            }
            for &i in &c.members {
                if i >= fleet.len() || !seen.insert(i) {
                    return Err(format!("microgrid index {i} appears twice or is out of range"));
                }
            }
            if aggregate(fleet, c.members.iter().copied()) != c.aggregate {
                return Err(format!("community {} aggregate differs from its members' sum", c.id));
            }
            let mean = Point::mean(c.members.iter().map(|&i| &fleet.microgrids[i].location)).unwrap();
            let tol = F::of(1e-9);
            if (mean.x - c.centroid.x).abs() > tol || (mean.y - c.centroid.y).abs() > tol {
                return Err(format!("community {} centroid is not the mean of its members", c.id));
            }
        }
        for &i in &self.unassigned {
            if i >= fleet.len() || !seen.insert(i) {
                return Err(format!("unassigned microgrid index {i} also assigned or out of range"));
            }
        }
        if seen.len() != fleet.len() {
            return Err(format!("{} of {} microgrids covered", seen.len(), fleet.len()));
        }
        Ok(())
    }

    pub fn community_sizes(&self) -> Vec<usize> {
        self.communities.iter().map(|c| c.len()).collect()
    }
}

/// Drops microgrids that have any zero reading, logging a warning for each.
pub fn drop_zero_readings<F>(records: Vec<MicrogridRecord<F>>) -> Vec<MicrogridRecord<F>> {
    records
        .into_iter()
        .filter(|r| {
            let zero = r.series.contains(&0);
            if zero {
                warn!("dropping microgrid {}: zero net energy reading", r.id);
            }
            !zero
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u32, x: f64, y: f64, series: Vec<i64>) -> MicrogridRecord<f64> {
        MicrogridRecord {
            id: MicrogridId(id),
            location: Point::new(x, y),
            series,
        }
    }

    #[test]
    fn window_slice_shifts_start() {
        let f = Fleet::new(
            vec![MicrogridRecord {
                id: MicrogridId(4),
                location: Point::new(0.1, 0.2),
                series: vec![5, -3, 2, 7],
            }],
            0,
        )
        .unwrap();
        let g = f.slice_window(1, 2).unwrap();
        assert_eq!(g.series(0), &[-3, 2]);
        assert_eq!(g.window().start, 1);
        assert_eq!(g.sign(0), SignProfile::Mixed);
        assert!(f.slice_window(3, 2).is_err());
    }

    #[test]
    fn min_max_endpoints() {
        let fleet = Fleet::from_raw(
            vec![rec(0, 0.0, 1.0, vec![1]), rec(1, 50.0, 1.0, vec![1]), rec(2, 100.0, 1.0, vec![1])],
            0,
        )
        .unwrap();
        let xs: Vec<f64> = fleet.locations().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn degenerate_axis_maps_to_half() {
        let fleet = Fleet::from_raw(vec![rec(0, 7.0, 0.0, vec![1]), rec(1, 7.0, 3.0, vec![1])], 0).unwrap();
        assert!(fleet.locations().iter().all(|p| p.x == 0.5));
    }

    #[test]
    fn uneven_spacing() {
        let fleet = Fleet::from_raw(
            vec![rec(0, 10.0, 0.0, vec![1]), rec(1, 20.0, 0.0, vec![1]), rec(2, 40.0, 0.0, vec![1])],
            0,
        )
        .unwrap();
        let xs: Vec<f64> = fleet.locations().iter().map(|p| p.x).collect();
        assert_eq!(xs[0], 0.0);
        assert!((xs[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(xs[2], 1.0);
        assert_eq!(fleet.microgrids()[1].raw_location.unwrap().x, 20.0);
    }

    #[test]
    fn empty_fleet_is_rejected() {
        assert!(matches!(Fleet::<f64>::from_raw(vec![], 0), Err(Error::EmptyFleet)));
    }

    #[test]
    fn ragged_window_names_the_id() {
        let err = Fleet::new(vec![rec(0, 0.0, 0.0, vec![1, 1, 1, 1]), rec(7, 0.0, 0.0, vec![1, 1, 1])], 0).unwrap_err();
        assert!(matches!(err, Error::WindowMismatch { id: MicrogridId(7), .. }));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let err = Fleet::new(vec![rec(3, 0.0, 0.0, vec![1]), rec(3, 0.5, 0.0, vec![1])], 0).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(MicrogridId(3))));
    }

    #[test]
    fn sign_profiles_follow_values() {
        let fleet = Fleet::new(
            vec![rec(0, 0.0, 0.0, vec![1, 2]), rec(1, 0.0, 0.0, vec![-1, -2]), rec(2, 0.0, 0.0, vec![1, -2])],
            0,
        )
        .unwrap();
        assert_eq!(fleet.sign(0), SignProfile::AllPositive);
        assert_eq!(fleet.sign(1), SignProfile::AllNegative);
        assert_eq!(fleet.sign(2), SignProfile::Mixed);
        assert_eq!(fleet.positive_indices(), vec![0]);
        assert_eq!(fleet.non_positive_indices(), vec![1, 2]);
        assert!(fleet.require_homogeneous().is_err());
    }

    #[test]
    fn assignment_validation_catches_overlap() {
        let fleet = Fleet::new(vec![rec(0, 0.0, 0.0, vec![1]), rec(1, 1.0, 0.0, vec![2])], 0).unwrap();
        let mut a = Assignment::from_groups(&fleet, CommunityKind::Hec, vec![vec![0, 1]], vec![]);
        assert!(a.validate(&fleet).is_ok());
        assert_eq!(a.communities[0].aggregate, vec![3]);
        assert_eq!(a.communities[0].centroid, Point::new(0.5, 0.0));
        a.unassigned.push(1);
        assert!(a.validate(&fleet).is_err());
    }
}
