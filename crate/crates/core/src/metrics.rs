//! Community utility metrics and the per-run report.
//!
//! SSE always uses squared Euclidean distance, whatever metric routed the
//! flows. Energies in the report are watts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::Substations;
use crate::error::{Error, Result};
use crate::flow::{direct_load, FlowPlan, LossModel, DISTANCE_UNIT};
use crate::mec::{discover_mec_with, MecConfig};
use crate::energy::NeNormalizer;
use crate::model::{mw_to_watts, Assignment, Fleet};
use crate::scalar::Scalar;

/// `sum_j sum_{i in c_j} |m_i - mu_j|^2`.
pub fn spatial_sse<F: Scalar>(fleet: &Fleet<F>, assignment: &Assignment<F>) -> F {
    assignment
        .communities
        .iter()
        .flat_map(|c| c.members.iter().map(move |&i| fleet.location(i).squared_distance(&c.centroid)))
        .sum()
}

pub fn sse_ratio<F: Scalar>(fleet: &Fleet<F>, assignment: &Assignment<F>, benchmark: &Assignment<F>) -> Result<f64> {
    ratio_to(spatial_sse(fleet, assignment).as_f64(), spatial_sse(fleet, benchmark).as_f64())
}

pub fn ratio_to(sse: f64, benchmark_sse: f64) -> Result<f64> {
    if benchmark_sse <= 0.0 {
        return Err(Error::DegenerateBenchmark);
    }
    Ok(sse / benchmark_sse)
}

/// Benchmark clustering with the net-energy threshold disabled.
pub fn benchmark_assignment<F: Scalar>(fleet: &Fleet<F>, normalizer: &NeNormalizer) -> Result<Assignment<F>> {
    let cfg = MecConfig::new(1.0, 0.05);
    Ok(discover_mec_with(fleet, &cfg, normalizer)?.0)
}

/// Fraction of communities whose aggregate is nonnegative at every timestamp.
pub fn nonnegative_ratio<F: Scalar>(assignment: &Assignment<F>) -> f64 {
    if assignment.communities.is_empty() {
        return 0.0;
    }
    let ok = assignment.communities.iter().filter(|c| c.is_self_sufficient()).count();
    ok as f64 / assignment.communities.len() as f64
}

/// Mean net energy per assigned microgrid and timestamp, watts.
pub fn member_net_energy<F: Scalar>(fleet: &Fleet<F>, assignment: &Assignment<F>) -> f64 {
    let members = assignment.assigned_count();
    if members == 0 {
        return 0.0;
    }
    let total: i64 = assignment.communities.iter().flat_map(|c| c.aggregate.iter()).sum();
    mw_to_watts(total) / (members * fleet.timestamps()) as f64
}

/// Inputs to [`summarize`] beyond the assignment itself.
#[derive(Debug, Clone)]
pub struct ReportContext<'a, F> {
    pub loss: LossModel,
    pub substations: Option<&'a Substations<F>>,
    pub benchmark_sse: Option<f64>,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub kind: String,
    pub microgrids: usize,
    pub communities: usize,
    pub unassigned: usize,
    pub flagged: usize,
    pub spatial_sse: f64,
    pub sse_ratio: Option<f64>,
    /// Per timestamp across communities, watts.
    pub net_energy_avg_t: Vec<f64>,
    pub net_energy_max_t: Vec<f64>,
    pub net_energy_min_t: Vec<f64>,
    pub net_energy_avg: f64,
    pub net_energy_max: f64,
    pub net_energy_min: f64,
    pub member_net_energy: f64,
    pub size_avg: f64,
    pub size_max: usize,
    pub size_min: usize,
    pub nonnegative_ratio: f64,
    pub shipped_mw: Option<i64>,
    pub topup_mw: Option<i64>,
    pub load_with: Option<f64>,
    pub load_without: Option<f64>,
    pub theta: f64,
    pub uniform_theta: bool,
    pub runtime_seconds: f64,
}

pub fn summarize<F: Scalar>(
    fleet: &Fleet<F>,
    assignment: &Assignment<F>,
    plan: Option<&FlowPlan>,
    ctx: &ReportContext<'_, F>,
) -> MetricsReport {
    let len = fleet.timestamps();
    let k = assignment.communities.len();
    let mut avg_t = vec![0.0; len];
    let mut max_t = vec![0.0; len];
    let mut min_t = vec![0.0; len];
    for t in 0..len {
        let values: Vec<i64> = assignment.communities.iter().map(|c| c.aggregate[t]).collect();
        if values.is_empty() {
            continue;
        }
        avg_t[t] = mw_to_watts(values.iter().sum()) / k as f64;
        max_t[t] = mw_to_watts(*values.iter().max().expect("nonempty"));
        min_t[t] = mw_to_watts(*values.iter().min().expect("nonempty"));
    }
    let sizes = assignment.community_sizes();
    let spatial = spatial_sse(fleet, assignment).as_f64();
    let (load_with, load_without) = match (plan, ctx.substations) {
        (Some(p), Some(s)) => (
            Some(p.total_load() + direct_load(fleet, assignment.unassigned.iter().copied(), s, &ctx.loss)),
            Some(direct_load(fleet, 0..fleet.len(), s, &ctx.loss)),
        ),
        (Some(p), None) => (Some(p.total_load()), None),
        (None, Some(s)) => (None, Some(direct_load(fleet, 0..fleet.len(), s, &ctx.loss))),
        (None, None) => (None, None),
    };
    MetricsReport {
        kind: assignment.kind.to_string(),
        microgrids: fleet.len(),
        communities: k,
        unassigned: assignment.unassigned.len(),
        flagged: assignment.flagged.len(),
        spatial_sse: spatial,
        sse_ratio: ctx.benchmark_sse.and_then(|b| ratio_to(spatial, b).ok()),
        net_energy_avg: mean(&avg_t),
        net_energy_max: if k == 0 { 0.0 } else { max_t.iter().copied().fold(f64::MIN, f64::max) },
        net_energy_min: if k == 0 { 0.0 } else { min_t.iter().copied().fold(f64::MAX, f64::min) },
        net_energy_avg_t: avg_t,
        net_energy_max_t: max_t,
        net_energy_min_t: min_t,
        member_net_energy: member_net_energy(fleet, assignment),
        size_avg: if sizes.is_empty() { 0.0 } else { sizes.iter().sum::<usize>() as f64 / sizes.len() as f64 },
        size_max: sizes.iter().copied().max().unwrap_or(0),
        size_min: sizes.iter().copied().min().unwrap_or(0),
        nonnegative_ratio: nonnegative_ratio(assignment),
        shipped_mw: plan.map(|p| p.total_shipped()),
        topup_mw: plan.map(|p| p.total_topup()),
        load_with,
        load_without,
        theta: ctx.loss.theta,
        uniform_theta: ctx.loss.uniform,
        runtime_seconds: ctx.runtime_seconds,
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, |x| x.to_string())
}

impl MetricsReport {
    /// Flat `key,value` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = vec![
            ("kind".into(), self.kind.clone()),
            ("microgrids".into(), self.microgrids.to_string()),
            ("communities".into(), self.communities.to_string()),
            ("unassigned".into(), self.unassigned.to_string()),
            ("flagged".into(), self.flagged.to_string()),
            ("spatial_sse".into(), self.spatial_sse.to_string()),
            ("sse_ratio".into(), opt(&self.sse_ratio)),
            ("net_energy_avg".into(), self.net_energy_avg.to_string()),
            ("net_energy_max".into(), self.net_energy_max.to_string()),
            ("net_energy_min".into(), self.net_energy_min.to_string()),
            ("member_net_energy".into(), self.member_net_energy.to_string()),
            ("size_avg".into(), self.size_avg.to_string()),
            ("size_max".into(), self.size_max.to_string()),
            ("size_min".into(), self.size_min.to_string()),
            ("nonnegative_ratio".into(), self.nonnegative_ratio.to_string()),
            ("shipped_mw".into(), opt(&self.shipped_mw)),
            ("topup_mw".into(), opt(&self.topup_mw)),
            ("load_with".into(), opt(&self.load_with)),
            ("load_without".into(), opt(&self.load_without)),
            ("theta".into(), self.theta.to_string()),
            ("uniform_theta".into(), self.uniform_theta.to_string()),
            ("runtime_seconds".into(), self.runtime_seconds.to_string()),
        ];
        for (name, series) in [
            ("net_energy_avg_t", &self.net_energy_avg_t),
            ("net_energy_max_t", &self.net_energy_max_t),
            ("net_energy_min_t", &self.net_energy_min_t),
        ] {
            for (t, v) in series.iter().enumerate() {
                e.push((format!("{name}{t}"), v.to_string()));
            }
        }
        e
    }

    pub fn from_entries(entries: &[(String, String)]) -> std::result::Result<Self, String> {
        let map: BTreeMap<&str, &str> = entries.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let get = |k: &str| map.get(k).copied().ok_or_else(|| format!("missing key `{k}`"));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("bad value `{v}` for `{k}`"))
        }
        fn maybe<T: std::str::FromStr>(k: &str, v: &str) -> std::result::Result<Option<T>, String> {
            if v.is_empty() {
                Ok(None)
            } else {
                num(k, v).map(Some)
            }
        }
        let series = |name: &str| -> std::result::Result<Vec<f64>, String> {
            let mut out = Vec::new();
            while let Some(v) = map.get(format!("{name}{}", out.len()).as_str()) {
                out.push(num(name, v)?);
            }
            Ok(out)
        };
        macro_rules! field {
            ($k:literal) => {
                num($k, get($k)?)?
            };
        }
        macro_rules! optional {
            ($k:literal) => {
                maybe($k, get($k)?)?
            };
        }
        Ok(Self {
            kind: get("kind")?.to_string(),
            microgrids: field!("microgrids"),
            communities: field!("communities"),
            unassigned: field!("unassigned"),
            flagged: field!("flagged"),
            spatial_sse: field!("spatial_sse"),
            sse_ratio: optional!("sse_ratio"),
            net_energy_avg_t: series("net_energy_avg_t")?,
            net_energy_max_t: series("net_energy_max_t")?,
            net_energy_min_t: series("net_energy_min_t")?,
            net_energy_avg: field!("net_energy_avg"),
            net_energy_max: field!("net_energy_max"),
            net_energy_min: field!("net_energy_min"),
            member_net_energy: field!("member_net_energy"),
            size_avg: field!("size_avg"),
            size_max: field!("size_max"),
            size_min: field!("size_min"),
            nonnegative_ratio: field!("nonnegative_ratio"),
            shipped_mw: optional!("shipped_mw"),
            topup_mw: optional!("topup_mw"),
            load_with: optional!("load_with"),
            load_without: optional!("load_without"),
            theta: field!("theta"),
            uniform_theta: field!("uniform_theta"),
            runtime_seconds: field!("runtime_seconds"),
        })
    }

    /// Human-readable block with the unit conventions in the header.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# loss fraction = theta * distance / {DISTANCE_UNIT} (theta = {}, {}); SSE uses squared Euclidean distance; energy in W",
            self.theta,
            if self.uniform_theta { "flat in delivery constraint" } else { "per pair" }
        );
        let _ = writeln!(s, "{} communities: {} over {} microgrids ({} unassigned, {} flagged)", self.kind, self.communities, self.microgrids, self.unassigned, self.flagged);
        let _ = writeln!(s, "size avg/max/min: {:.3} / {} / {}", self.size_avg, self.size_max, self.size_min);
        let _ = writeln!(s, "spatial SSE: {:.6}", self.spatial_sse);
        if let Some(r) = self.sse_ratio {
            let _ = writeln!(s, "SSE ratio: {r:.6}");
        }
        let _ = writeln!(
            s,
            "community net energy avg/max/min: {:.3} / {:.3} / {:.3}",
            self.net_energy_avg, self.net_energy_max, self.net_energy_min
        );
        let _ = writeln!(s, "net energy per member: {:.3}", self.member_net_energy);
        let _ = writeln!(s, "nonnegative ratio: {:.4}", self.nonnegative_ratio);
        if let (Some(a), Some(b)) = (self.shipped_mw, self.topup_mw) {
            let _ = writeln!(s, "shipped: {:.3} W, grid top-up: {:.3} W", mw_to_watts(a), mw_to_watts(b));
        }
        if let Some(l) = self.load_with {
            let _ = writeln!(s, "load with communities: {l:.6}");
        }
        if let Some(l) = self.load_without {
            let _ = writeln!(s, "load without communities: {l:.6}");
        }
        let _ = writeln!(s, "runtime: {:.3} s", self.runtime_seconds);
        s
    }
}
