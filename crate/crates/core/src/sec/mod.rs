//! Self-sufficient energy communities.
//!
//! The assignment is searched combinatorially; for a fixed assignment the load
//! separates into one exact transportation problem per community and
//! timestamp. [`discover_sec_tabu`] searches assignments with a Tabu list,
//! [`discover_sec_twophase`] grows communities around spatial clusters of
//! always-positive microgrids, and [`exact_sec`] enumerates every partition of
//! tiny fleets.

mod tabu;
mod twophase;

use crate::data::Substations;
use crate::error::{Error, Result};
use crate::flow::{transport_flow, FlowObjective, FlowPlan, LossModel};
use crate::model::{Assignment, Community, CommunityKind, Fleet, MilliWatts};
use crate::oracle::{for_each_partition, partition_count};
use crate::scalar::Scalar;

pub use tabu::{discover_sec_tabu, SearchStep, SecOptConfig, TabuOutcome};
pub use twophase::{default_k_range, discover_sec_twophase, TwoPhaseConfig};

/// Inclusive range of community counts `min, min + step, ..., <= max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct KRange {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl KRange {
    pub fn new(min: usize, max: usize, step: usize) -> Self {
        Self { min, max, step }
    }

    pub fn single(k: usize) -> Self {
        Self::new(k, k, 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min == 0 || self.min > self.max || self.step == 0 {
            return Err(Error::InvalidConfig(format!(
                "invalid K range {}..={} step {}",
                self.min, self.max, self.step
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<usize> {
        (self.min..=self.max).step_by(self.step.max(1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SecViolation {
    /// Fleet index of a microgrid left outside every community.
    Unassigned { index: usize },
    NegativeAggregate { community: u32, t: usize, value: MilliWatts },
}

/// Checks that every microgrid is assigned and every aggregate is
/// nonnegative; reports the first violation found.
pub fn sec_feasible<F: Scalar>(assignment: &Assignment<F>) -> std::result::Result<(), SecViolation> {
    if let Some(&index) = assignment.unassigned.first() {
        return Err(SecViolation::Unassigned { index });
    }
    community_violation(assignment)
}

/// Aggregate nonnegativity only; unassigned microgrids are ignored.
pub fn community_violation<F: Scalar>(assignment: &Assignment<F>) -> std::result::Result<(), SecViolation> {
    for c in &assignment.communities {
        if let Some((t, &value)) = c.aggregate.iter().enumerate().find(|(_, &e)| e < 0) {
            return Err(SecViolation::NegativeAggregate {
                community: c.id,
                t,
                value,
            });
        }
    }
    Ok(())
}

/// `sum_t max(0, -E(t))`, milliwatts.
pub fn deficit(aggregate: &[MilliWatts]) -> MilliWatts {
    aggregate.iter().filter(|&&e| e < 0).map(|e| -e).sum()
}

/// Load of one community summed over the window, with min-load transport
/// flows and grid top-ups.
pub fn community_load<F: Scalar>(fleet: &Fleet<F>, community: &Community<F>, loss: &LossModel, substations: &Substations<F>) -> f64 {
    (0..fleet.timestamps())
        .map(|t| {
            transport_flow(fleet, community, t, loss, FlowObjective::MinLoad, substations)
                .iter()
                .map(|s| s.load)
                .sum::<f64>()
        })
        .sum()
}

/// Total transmission load of an assignment under min-load flows.
pub fn evaluate_load_objective<F: Scalar>(
    assignment: &Assignment<F>,
    fleet: &Fleet<F>,
    loss: &LossModel,
    substations: &Substations<F>,
) -> f64 {
    assignment
        .communities
        .iter()
        .map(|c| community_load(fleet, c, loss, substations))
        .sum()
}

/// Self-sufficient communities that still needed the grid at some timestamp
/// because losses ate into a nonnegative aggregate.
pub fn loss_gap_communities<F: Scalar>(assignment: &Assignment<F>, plan: &FlowPlan) -> Vec<u32> {
    let mut ids: Vec<u32> = assignment
        .communities
        .iter()
        .filter(|c| c.is_self_sufficient())
        .filter(|c| plan.shipments.iter().any(|s| s.is_topup() && s.community == c.id))
        .map(|c| c.id)
        .collect();
    ids.dedup();
    ids
}

/// Fails with `Infeasible` at the first timestamp where the fleet total is negative.
pub fn require_nonnegative_total<F: Scalar>(fleet: &Fleet<F>) -> Result<()> {
    match fleet.total_series().iter().enumerate().find(|(_, &e)| e < 0) {
        Some((t, &total)) => Err(Error::Infeasible { t, total }),
        None => Ok(()),
    }
}

pub const EXACT_LIMIT: usize = 12;

/// Minimum-load self-sufficient partition by exhaustive enumeration over
/// partitions into exactly `k` blocks for each `k` in `ks`.
///
/// Returns `None` when no such partition is self-sufficient. Ties keep the
/// smaller `k`, then the first partition in enumeration order.
pub fn exact_sec<F: Scalar>(
    fleet: &Fleet<F>,
    ks: &[usize],
    loss: &LossModel,
    substations: &Substations<F>,
) -> Result<Option<(Assignment<F>, f64)>> {
    let n = fleet.len();
    if n > EXACT_LIMIT {
        return Err(Error::TooLarge(format!("{n} microgrids (limit {EXACT_LIMIT})")));
    }
    let mut best: Option<(Vec<Vec<usize>>, f64)> = None;
    for &k in ks {
        if k == 0 || k > n {
            continue;
        }
        log::debug!("enumerating {} partitions into {k} blocks", partition_count(n, k));
        for_each_partition(n, k, |blocks| {
            let communities: Vec<Community<F>> = blocks
                .iter()
                .enumerate()
                .map(|(j, b)| Community::from_members(fleet, j as u32, b.clone()))
                .collect();
            if communities.iter().any(|c| !c.is_self_sufficient()) {
                return;
            }
            let load: f64 = communities.iter().map(|c| community_load(fleet, c, loss, substations)).sum();
            if best.as_ref().is_none_or(|(_, b)| load < *b) {
                best = Some((blocks.to_vec(), load));
            }
        });
    }
    Ok(best.map(|(groups, load)| {
        let a = Assignment::from_groups(fleet, CommunityKind::Sec, groups, Vec::new())
            .with_provenance("algorithm", "sec-exact")
            .with_provenance("theta", loss.theta);
        (a, load)
    }))
}
