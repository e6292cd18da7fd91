//! Intra-community energy allocation and transmission load.
//!
//! Homogeneous communities route through their centroid in a star. Mixed and
//! self-sufficient communities solve one transportation problem per timestamp
//! from surplus members to deficit members, with the main grid covering any
//! shortfall from the nearest substation.
//!
//! Amounts are milliwatts. Loads are reported in watts times normalized
//! distance: `amount_w * theta' * distance`, where `theta' = theta / 0.1` is
//! the loss coefficient per unit of normalized distance.

mod lp;
pub mod transport;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Substations;
use crate::error::{Error, Result};
use crate::geometry::Metric;
use crate::model::{mw_to_watts, Assignment, Community, CommunityKind, Fleet, MicrogridId, MilliWatts};
use crate::scalar::Scalar;

pub use transport::{solve_transportation, TransportError, TransportProblem, TransportSolution};

pub const DEFAULT_THETA: f64 = 0.0001;

/// Distance over which a fraction `theta` of shipped energy is lost.
pub const DISTANCE_UNIT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub theta: f64,
    /// Use the flat fraction `theta` in the delivery constraint instead of
    /// the distance-scaled `theta' * distance`.
    pub uniform: bool,
    pub metric: Metric,
}

impl Default for LossModel {
    fn default() -> Self {
        Self::new(DEFAULT_THETA)
    }
}

impl LossModel {
    pub fn new(theta: f64) -> Self {
        Self {
            theta,
            uniform: true,
            metric: Metric::Euclidean,
        }
    }

    pub fn per_pair(theta: f64) -> Self {
        Self {
            uniform: false,
            ..Self::new(theta)
        }
    }

    pub fn per_unit_distance(&self) -> f64 {
        self.theta / DISTANCE_UNIT
    }

    /// Fraction of energy lost when shipping over `distance`.
    pub fn fraction(&self, distance: f64) -> f64 {
        if self.uniform {
            self.theta
        } else {
            self.per_unit_distance() * distance
        }
    }

    pub fn load(&self, amount: MilliWatts, distance: f64) -> f64 {
        mw_to_watts(amount) * self.per_unit_distance() * distance
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::InvalidConfig(format!("loss rate {} outside [0, 1)", self.theta)));
        }
        let diameter = match self.metric {
            Metric::Euclidean => std::f64::consts::SQRT_2,
            Metric::Manhattan => 2.0,
        };
        if !self.uniform && self.fraction(diameter) >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "loss rate {} loses everything within the unit square",
                self.theta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowObjective {
    MinTotalShipped,
    #[default]
    MinLoad,
}

impl FromStr for FlowObjective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "min-total-shipped" | "shipped" => Ok(FlowObjective::MinTotalShipped),
            "min-load" | "load" => Ok(FlowObjective::MinLoad),
            other => Err(format!("unknown flow objective `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Microgrid(MicrogridId),
    Centroid,
    Grid,
    Bank,
}

impl Endpoint {
    pub fn microgrid(&self) -> Option<MicrogridId> {
        match self {
            Endpoint::Microgrid(id) => Some(*id),
            _ => None,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Microgrid(id) => write!(f, "{id}"),
            Endpoint::Centroid => f.write_str("CENTROID"),
            Endpoint::Grid => f.write_str("GRID"),
            Endpoint::Bank => f.write_str("BANK"),
        }
    }
}

impl FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "CENTROID" => Ok(Endpoint::Centroid),
            "GRID" => Ok(Endpoint::Grid),
            "BANK" => Ok(Endpoint::Bank),
            id => id
                .parse::<u32>()
                .map(|v| Endpoint::Microgrid(MicrogridId(v)))
                .map_err(|_| format!("invalid endpoint `{id}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shipment {
    pub community: u32,
    /// Offset within the window.
    pub timestamp: usize,
    pub source: Endpoint,
    pub sink: Endpoint,
    pub amount_mw: MilliWatts,
    pub distance: f64,
    pub load: f64,
}

impl Shipment {
    pub fn is_topup(&self) -> bool {
        self.source == Endpoint::Grid
    }
}

/// Every shipment of an assignment, ordered by community then timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowPlan {
    pub shipments: Vec<Shipment>,
}

impl FlowPlan {
    /// `sum y` over shipments between members or through a centroid.
    pub fn total_shipped(&self) -> MilliWatts {
        self.shipments.iter().filter(|s| !s.is_topup()).map(|s| s.amount_mw).sum()
    }

    pub fn total_topup(&self) -> MilliWatts {
        self.shipments.iter().filter(|s| s.is_topup()).map(|s| s.amount_mw).sum()
    }

    pub fn total_load(&self) -> f64 {
        self.shipments.iter().map(|s| s.load).sum()
    }

    pub fn topup_at(&self, community: u32, timestamp: usize) -> MilliWatts {
        self.shipments
            .iter()
            .filter(|s| s.is_topup() && s.community == community && s.timestamp == timestamp)
            .map(|s| s.amount_mw)
            .sum()
    }

    /// Checks nonnegativity, supplier conservation and consumer satisfaction
    /// for member-to-member plans.
    pub fn check_conservation<F: Scalar>(&self, fleet: &Fleet<F>, loss: &LossModel) -> std::result::Result<(), String> {
        let n = fleet.len();
        let len = fleet.timestamps();
        let mut out = vec![0i64; n * len];
        let mut delivered = vec![0.0f64; n * len];
        for s in &self.shipments {
            if s.amount_mw < 0 {
                return Err(format!("negative shipment {s:?}"));
            }
            if let Endpoint::Microgrid(id) = s.source {
                let i = fleet.index_of(id).ok_or(format!("unknown source {id}"))?;
                out[i * len + s.timestamp] += s.amount_mw;
            }
            if let Endpoint::Microgrid(id) = s.sink {
                let i = fleet.index_of(id).ok_or(format!("unknown sink {id}"))?;
                let kept = match s.source {
                    Endpoint::Grid | Endpoint::Centroid => 1.0,
                    _ => 1.0 - loss.fraction(s.distance),
                };
                delivered[i * len + s.timestamp] += s.amount_mw as f64 * kept;
            }
        }
        for i in 0..n {
            for (t, &e) in fleet.series(i).iter().enumerate() {
                let k = i * len + t;
                if e > 0 && out[k] > e {
                    return Err(format!("microgrid {} ships {} > {} at t={t}", fleet.id(i), out[k], e));
                }
                if e < 0 && out[k] > 0 {
                    return Err(format!("deficit microgrid {} ships at t={t}", fleet.id(i)));
                }
                if e < 0 && delivered[k] + 1e-6 < (-e) as f64 && self.has_inflow(fleet.id(i), t) {
                    return Err(format!(
                        "microgrid {} receives {} < {} at t={t}",
                        fleet.id(i),
                        delivered[k],
                        -e
                    ));
                }
            }
        }
        Ok(())
    }

    fn has_inflow(&self, id: MicrogridId, t: usize) -> bool {
        self.shipments
            .iter()
            .any(|s| s.timestamp == t && s.sink == Endpoint::Microgrid(id))
    }
}

/// Star routing for a homogeneous community at offset `t`.
///
/// Deficit members draw `|e_i(t)|` from the centroid; surplus members push
/// `e_i(t)` to the centroid acting as an energy bank.
pub fn star_flow<F: Scalar>(fleet: &Fleet<F>, community: &Community<F>, t: usize, loss: &LossModel) -> Result<Vec<Shipment>> {
    let Some(&first) = community.members.first() else {
        return Ok(Vec::new());
    };
    let positive = fleet.series(first)[t] > 0;
    let mut out = Vec::with_capacity(community.len());
    for &i in &community.members {
        let e = fleet.series(i)[t];
        if (e > 0) != positive {
            return Err(Error::NotHomogeneous { id: fleet.id(i) });
        }
        let distance = fleet.location(i).distance(&community.centroid, loss.metric).as_f64();
        let amount = e.abs();
        let (source, sink) = if positive {
            (Endpoint::Microgrid(fleet.id(i)), Endpoint::Bank)
        } else {
            (Endpoint::Centroid, Endpoint::Microgrid(fleet.id(i)))
        };
        out.push(Shipment {
            community: community.id,
            timestamp: t,
            source,
            sink,
            amount_mw: amount,
            distance,
            load: loss.load(amount, distance),
        });
    }
    Ok(out)
}

/// Optimal member-to-member allocation for a community at offset `t`, with
/// grid top-ups for whatever internal supply cannot cover.
pub fn transport_flow<F: Scalar>(
    fleet: &Fleet<F>,
    community: &Community<F>,
    t: usize,
    loss: &LossModel,
    objective: FlowObjective,
    substations: &Substations<F>,
) -> Vec<Shipment> {
    let suppliers: Vec<usize> = community.members.iter().copied().filter(|&i| fleet.series(i)[t] > 0).collect();
    let consumers: Vec<usize> = community.members.iter().copied().filter(|&i| fleet.series(i)[t] < 0).collect();
    if consumers.is_empty() {
        return Vec::new();
    }
    let dist = |i: usize, s: usize| fleet.location(i).distance(&fleet.location(s), loss.metric).as_f64();
    let grid_dist: Vec<f64> = consumers
        .iter()
        .map(|&s| substations.nearest(&fleet.location(s), loss.metric).1.as_f64())
        .collect();
    let supply: Vec<MilliWatts> = suppliers.iter().map(|&i| fleet.series(i)[t]).collect();
    let need: Vec<MilliWatts> = consumers.iter().map(|&s| -fleet.series(s)[t]).collect();
    let unit_cost = |i: usize, s: usize| match objective {
        FlowObjective::MinTotalShipped => 1.0,
        FlowObjective::MinLoad => dist(suppliers[i], consumers[s]),
    };

    let flows = if loss.uniform {
        uniform_flows(&supply, &need, loss.theta, &unit_cost, &grid_dist, objective)
    } else {
        let frac = |i: usize, s: usize| loss.fraction(dist(suppliers[i], consumers[s]));
        per_pair_flows(&supply, &need, &frac, &unit_cost, &grid_dist, objective)
    };

    let (m, n) = (suppliers.len(), consumers.len());
    let mut out = Vec::new();
    let mut delivered = vec![0.0f64; n];
    for i in 0..m {
        for s in 0..n {
            let y = flows[i * n + s];
            if y == 0 {
                continue;
            }
            let d = dist(suppliers[i], consumers[s]);
            delivered[s] += y as f64 * (1.0 - loss.fraction(d));
            out.push(Shipment {
                community: community.id,
                timestamp: t,
                source: Endpoint::Microgrid(fleet.id(suppliers[i])),
                sink: Endpoint::Microgrid(fleet.id(consumers[s])),
                amount_mw: y,
                distance: d,
                load: loss.load(y, d),
            });
        }
    }
    for s in 0..n {
        let got = (delivered[s] + 1e-6).floor() as i64;
        let topup = need[s] - got.min(need[s]);
        if topup > 0 {
            out.push(Shipment {
                community: community.id,
                timestamp: t,
                source: Endpoint::Grid,
                sink: Endpoint::Microgrid(fleet.id(consumers[s])),
                amount_mw: topup,
                distance: grid_dist[s],
                load: loss.load(topup, grid_dist[s]),
            });
        }
    }
    out
}

/// Uniform loss: each consumer must receive `ceil(need / (1 - theta))` shipped
/// units, which keeps the problem a balanced integral transportation problem.
fn uniform_flows(
    supply: &[MilliWatts],
    need: &[MilliWatts],
    theta: f64,
    unit_cost: &dyn Fn(usize, usize) -> f64,
    grid_dist: &[f64],
    objective: FlowObjective,
) -> Vec<MilliWatts> {
    let (m, n) = (supply.len(), need.len());
    let required: Vec<MilliWatts> = need.iter().map(|&d| (d as f64 / (1.0 - theta)).ceil() as i64).collect();
    let total_supply: i64 = supply.iter().sum();
    let total_required: i64 = required.iter().sum();

    let mut problem = TransportProblem {
        supplies: supply.to_vec(),
        demands: required.clone(),
        costs: Vec::new(),
    };
    let slack_col = total_supply > total_required;
    let grid_row = total_supply < total_required;
    if slack_col {
        problem.demands.push(total_supply - total_required);
    }
    if grid_row {
        problem.supplies.push(total_required - total_supply);
    }
    let cols = problem.demands.len();
    for i in 0..problem.supplies.len() {
        for s in 0..cols {
            let c = if s >= n {
                0.0
            } else if i >= m {
                match objective {
                    FlowObjective::MinTotalShipped => 1.0,
                    FlowObjective::MinLoad => grid_dist[s],
                }
            } else {
                unit_cost(i, s)
            };
            problem.costs.push(c);
        }
    }
    let solution = solve_transportation(&problem).expect("balanced by construction");
    let mut flows = vec![0; m * n];
    for i in 0..m {
        for s in 0..n {
            flows[i * n + s] = solution.flows[i * cols + s];
        }
    }
    flows
}

/// Per-pair loss: a generalized transportation LP solved by the dense simplex.
///
/// Grid variables carry a dominating cost so internal supply is used first.
/// Fractional flows are rounded down, then leftover supplier capacity is
/// handed back to the largest fractional parts.
fn per_pair_flows(
    supply: &[MilliWatts],
    need: &[MilliWatts],
    frac: &dyn Fn(usize, usize) -> f64,
    unit_cost: &dyn Fn(usize, usize) -> f64,
    grid_dist: &[f64],
    objective: FlowObjective,
) -> Vec<MilliWatts> {
    let (m, n) = (supply.len(), need.len());
    if m == 0 {
        return Vec::new();
    }
    // columns: y (m*n), grid g (n), supplier slack (m), consumer surplus (n)
    let ny = m * n;
    let cols = ny + n + m + n;
    let mut max_cost: f64 = 1.0;
    let mut c = vec![0.0; cols];
    for i in 0..m {
        for s in 0..n {
            c[i * n + s] = unit_cost(i, s);
            max_cost = max_cost.max(c[i * n + s]);
        }
    }
    let big = 1e6 * (1.0 + max_cost);
    for s in 0..n {
        c[ny + s] = big
            + match objective {
                FlowObjective::MinTotalShipped => 0.0,
                FlowObjective::MinLoad => grid_dist[s],
            };
    }
    let mut a = vec![vec![0.0; cols]; m + n];
    let mut b = vec![0.0; m + n];
    let mut basis = vec![0; m + n];
    for i in 0..m {
        for s in 0..n {
            a[i][i * n + s] = 1.0;
        }
        a[i][ny + n + i] = 1.0;
        b[i] = supply[i] as f64;
        basis[i] = ny + n + i;
    }
    for s in 0..n {
        let r = m + s;
        for i in 0..m {
            a[r][i * n + s] = 1.0 - frac(i, s);
        }
        a[r][ny + s] = 1.0;
        a[r][ny + n + m + s] = -1.0;
        b[r] = need[s] as f64;
        basis[r] = ny + s;
    }
    let x = lp::simplex_min(&a, &b, &c, basis).expect("costs are nonnegative");

    let mut flows = vec![0i64; ny];
    for i in 0..m {
        let row = &x[i * n..(i + 1) * n];
        let mut used = 0;
        for s in 0..n {
            flows[i * n + s] = row[s].floor() as i64;
            used += flows[i * n + s];
        }
        let mut order: Vec<usize> = (0..n).filter(|&s| row[s] - row[s].floor() > 1e-9).collect();
        order.sort_by(|&p, &q| (row[q] - row[q].floor()).total_cmp(&(row[p] - row[p].floor())).then(p.cmp(&q)));
        for s in order {
            if used >= supply[i] {
                break;
            }
            flows[i * n + s] += 1;
            used += 1;
        }
    }
    flows
}

/// Flow plan for every community and timestamp of an assignment.
///
/// HEC communities use star routing; MEC and SEC communities use
/// transportation flows.
pub fn build_flow_plan<F: Scalar>(
    fleet: &Fleet<F>,
    assignment: &Assignment<F>,
    loss: &LossModel,
    objective: FlowObjective,
    substations: &Substations<F>,
) -> Result<FlowPlan> {
    loss.validate()?;
    let len = fleet.timestamps();
    let tasks: Vec<(usize, usize)> = (0..assignment.communities.len())
        .flat_map(|c| (0..len).map(move |t| (c, t)))
        .collect();
    let slices: Vec<Result<Vec<Shipment>>> = tasks
        .par_iter()
        .map(|&(c, t)| {
            let community = &assignment.communities[c];
            match assignment.kind {
                CommunityKind::Hec => star_flow(fleet, community, t, loss),
                CommunityKind::Mec | CommunityKind::Sec => {
                    Ok(transport_flow(fleet, community, t, loss, objective, substations))
                }
            }
        })
        .collect();
    let mut shipments = Vec::new();
    for slice in slices {
        shipments.extend(slice?);
    }
    Ok(FlowPlan { shipments })
}

/// Load of serving the given microgrids directly from their nearest substation.
pub fn direct_load<F: Scalar>(
    fleet: &Fleet<F>,
    indices: impl IntoIterator<Item = usize>,
    substations: &Substations<F>,
    loss: &LossModel,
) -> f64 {
    indices
        .into_iter()
        .map(|i| {
            let d = substations.nearest(&fleet.location(i), loss.metric).1.as_f64();
            let magnitude: MilliWatts = fleet.series(i).iter().map(|e| e.abs()).sum();
            loss.load(magnitude, d)
        })
        .sum()
}

/// Load with and without communities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadComparison {
    pub with_communities: f64,
    pub without_communities: f64,
}

/// Total load of a fleet. Without an assignment every microgrid trades with
/// its nearest substation; with one, community flows are summed and any
/// unassigned microgrid still trades with the grid.
pub fn fleet_load<F: Scalar>(
    fleet: &Fleet<F>,
    assignment: Option<&Assignment<F>>,
    substations: &Substations<F>,
    loss: &LossModel,
    objective: FlowObjective,
) -> Result<f64> {
    match assignment {
        None => Ok(direct_load(fleet, 0..fleet.len(), substations, loss)),
        Some(a) => {
            let plan = build_flow_plan(fleet, a, loss, objective, substations)?;
            Ok(plan.total_load() + direct_load(fleet, a.unassigned.iter().copied(), substations, loss))
        }
    }
}

pub fn compare_load<F: Scalar>(
    fleet: &Fleet<F>,
    assignment: &Assignment<F>,
    substations: &Substations<F>,
    loss: &LossModel,
    objective: FlowObjective,
) -> Result<LoadComparison> {
    Ok(LoadComparison {
        with_communities: fleet_load(fleet, Some(assignment), substations, loss, objective)?,
        without_communities: fleet_load(fleet, None, substations, loss, objective)?,
    })
}
