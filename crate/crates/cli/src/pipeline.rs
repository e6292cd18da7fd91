use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use energy_communities::data::{io, nonnegative_subset, simulate_substations};
use energy_communities::energy::NeNormalizer;
use energy_communities::flow::{build_flow_plan, FlowPlan};
use energy_communities::hec::{discover_hec_kmeans, discover_hec_ldbscan};
use energy_communities::mec::{discover_mec, AdmissionRow};
use energy_communities::metrics::{benchmark_assignment, spatial_sse, summarize, MetricsReport, ReportContext};
use energy_communities::sec::{
    discover_sec_tabu, discover_sec_twophase, exact_sec, require_nonnegative_total, KRange, SearchStep,
};
use energy_communities::{CommunityAssignment, Error, MicrogridFleet, Substations};

use crate::config::{Algorithm, DiscoveryConfig, Population};

/// Raised when an exhaustive search finds no self-sufficient partition.
#[derive(Debug, thiserror::Error)]
#[error("no self-sufficient partition into {0} communities")]
pub struct NoPartition(pub String);

pub fn data_dir(cfg: &DiscoveryConfig) -> anyhow::Result<&Path> {
    match &cfg.data {
        Some(d) => Ok(d),
        None => Err(Error::InvalidConfig("no input directory (--data)".into()).into()),
    }
}

pub fn out_dir(cfg: &DiscoveryConfig) -> anyhow::Result<PathBuf> {
    let Some(d) = &cfg.out else {
        return Err(Error::InvalidConfig("no output directory (--out)".into()).into());
    };
    std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    Ok(d.clone())
}

pub fn read_fleet(dir: &Path) -> anyhow::Result<MicrogridFleet> {
    io::read_fleet(&dir.join("microgrids.csv"), &dir.join("energy.csv"))
        .with_context(|| format!("reading fleet from {}", dir.display()))
}

/// Substations from the configured file, else K-Means centroids of the fleet.
pub fn substations(cfg: &DiscoveryConfig, fleet: &MicrogridFleet) -> anyhow::Result<Substations> {
    match &cfg.substations_file {
        Some(p) => Ok(io::read_substations(p)?),
        None => Ok(simulate_substations(fleet, cfg.substations, cfg.seed)?),
    }
}

/// Applies the window bounds and population filter.
pub fn prepare(raw: &MicrogridFleet, cfg: &DiscoveryConfig) -> anyhow::Result<MicrogridFleet> {
    let available = raw.timestamps();
    let len = match cfg.window_len {
        Some(l) => l,
        None if cfg.window_start < available => available - cfg.window_start,
        None => {
            return Err(Error::WindowTooLong {
                window: cfg.window_start + 1,
                available,
            }
            .into())
        }
    };
    let fleet = if cfg.window_start == 0 && len == available {
        raw.clone()
    } else {
        raw.slice_window(cfg.window_start, len)?
    };
    let keep = match cfg.population {
        Population::All => return Ok(fleet),
        Population::Positive => fleet.positive_indices(),
        Population::NonPositive => fleet.non_positive_indices(),
        Population::Nonnegative => nonnegative_subset(&fleet),
    };
    if keep.is_empty() {
        if cfg.population == Population::Positive {
            return Err(Error::NoPositiveMicrogrids.into());
        }
        return Err(Error::EmptyFleet.into());
    }
    Ok(fleet.subset(&keep, fleet.timestamps())?)
}

pub struct Run {
    pub assignment: CommunityAssignment,
    pub admissions: Option<Vec<AdmissionRow>>,
    pub trace: Option<Vec<SearchStep>>,
    pub plan: FlowPlan,
    pub report: MetricsReport,
}

fn sec_ks(cfg: &DiscoveryConfig) -> Vec<usize> {
    cfg.k_range().unwrap_or(KRange::single(cfg.k)).values()
}

/// Runs the configured algorithm, plans flows and summarizes. A Tabu search
/// that never became feasible leaves its best trace in `partial_trace`.
pub fn run(
    cfg: &DiscoveryConfig,
    fleet: &MicrogridFleet,
    subs: &Substations,
    partial_trace: &mut Option<Vec<SearchStep>>,
) -> anyhow::Result<Run> {
    cfg.validate()?;
    let started = Instant::now();
    let mut admissions = None;
    let mut trace = None;
    let mut benchmark_sse = None;
    let assignment = match cfg.algorithm {
        Algorithm::HecKmeans => discover_hec_kmeans(fleet, &cfg.kmeans())?,
        Algorithm::HecLdbscan => discover_hec_ldbscan(fleet, &cfg.ldbscan())?,
        Algorithm::Mec => {
            let (a, log) = discover_mec(fleet, &cfg.mec())?;
            admissions = Some(log.rows(fleet, &a));
            let normalizer = NeNormalizer::for_fleet(fleet, cfg.seed);
            let bench = benchmark_assignment(fleet, &normalizer)?;
            benchmark_sse = Some(spatial_sse(fleet, &bench));
            a
        }
        Algorithm::SecTabu => match discover_sec_tabu(fleet, &cfg.tabu(), subs) {
            Ok((a, out)) => {
                trace = Some(out.trace);
                a
            }
            Err(Error::BudgetExhausted { best_violation_mw, best }) => {
                *partial_trace = Some(best.trace.clone());
                return Err(Error::BudgetExhausted { best_violation_mw, best }.into());
            }
            Err(e) => return Err(e.into()),
        },
        Algorithm::SecTwophase => discover_sec_twophase(fleet, &cfg.two_phase())?,
        Algorithm::SecExact => {
            require_nonnegative_total(fleet)?;
            let ks = sec_ks(cfg);
            match exact_sec(fleet, &ks, &cfg.loss(), subs)? {
                Some((a, _)) => a,
                None => return Err(NoPartition(format!("{ks:?}")).into()),
            }
        }
    };
    let assignment = assignment.with_provenance("seed", cfg.seed);
    let plan = build_flow_plan(fleet, &assignment, &cfg.loss(), cfg.objective, subs)?;
    let seconds = if cfg.timing { started.elapsed().as_secs_f64() } else { 0.0 };
    let ctx = ReportContext {
        loss: cfg.loss(),
        substations: Some(subs),
        benchmark_sse,
        runtime_seconds: seconds,
    };
    let report = summarize(fleet, &assignment, Some(&plan), &ctx);
    Ok(Run {
        assignment,
        admissions,
        trace,
        plan,
        report,
    })
}

pub fn write_echo(dir: &Path, text: &str) -> anyhow::Result<()> {
    Ok(io::write_atomic(&dir.join("config.echo"), text.as_bytes())?)
}

pub fn write_report(dir: &Path, report: &MetricsReport) -> anyhow::Result<()> {
    io::write_metrics(report, &dir.join("metrics.csv"))?;
    io::write_atomic(&dir.join("metrics.txt"), report.to_text().as_bytes())?;
    Ok(())
}

pub fn write_run(dir: &Path, fleet: &MicrogridFleet, subs: &Substations, run: &Run) -> anyhow::Result<()> {
    io::write_assignment(&run.assignment, fleet, &dir.join("communities.csv"))?;
    io::write_substations(subs, &dir.join("substations.csv"))?;
    io::write_flow_plan(&run.plan, &dir.join("flows.csv"))?;
    if let Some(rows) = &run.admissions {
        io::write_admission_log(rows, &dir.join("admissions.csv"))?;
    }
    if let Some(trace) = &run.trace {
        io::write_search_trace(trace, &dir.join("trace.csv"))?;
    }
    write_report(dir, &run.report)
}

pub fn ensure_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        bail!(Error::InvalidConfig(format!("{} does not exist", path.display())));
    }
    Ok(())
}
