//! `ecd`: generate fleets, discover energy communities, plan flows and run
//! parameter sweeps from the command line.

mod config;
mod oracle;
mod pipeline;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use energy_communities::data::{bundled_geo_pool, generate_fleet, io, read_geo_pool, FleetMode, GenerateConfig, TraceSet};
use energy_communities::flow::build_flow_plan;
use energy_communities::metrics::{summarize, ReportContext};
use energy_communities::{CommunityAssignment, Error};
use serde::Serialize;

use config::Overrides;
use pipeline::NoPartition;

#[derive(Debug, Parser)]
#[command(name = "ecd", version, about = "Energy community discovery among microgrids")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "ECD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a fleet from trace profiles.
    Gen(GenArgs),
    /// Discover communities and write assignment, flows, logs and metrics.
    Discover(Overrides),
    /// Plan energy flows for a stored assignment.
    Flow(StoredArgs),
    /// Summarize a stored assignment (and flow plan, when given).
    Metrics(StoredArgs),
    /// Sweep one parameter and emit plot data per metric.
    Sweep(sweep::SweepArgs),
    /// Compare heuristics with exhaustive enumeration on tiny fleets.
    Oracle(oracle::OracleArgs),
}

#[derive(Debug, clap::Args, Serialize)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// consumption-only or gen-and-cons.
    #[arg(long, default_value = "gen-and-cons")]
    mode: FleetMode,
    /// Readings per microgrid.
    #[arg(long, default_value_t = 96)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace file with `profile_id,kind,index,watts` rows; bundled sample when unset.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Seconds between trace readings.
    #[arg(long, default_value_t = energy_communities::data::DEFAULT_CADENCE_SECONDS)]
    cadence: u32,
    /// Location pool with `location_id,lon,lat` rows; bundled sample when unset.
    #[arg(long)]
    geo: Option<PathBuf>,
    #[arg(long, default_value_t = 0.7)]
    jitter_min: f64,
    #[arg(long, default_value_t = 1.3)]
    jitter_max: f64,
}

#[derive(Debug, clap::Args)]
struct StoredArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Assignment CSV; its community kind follows `--algo`.
    #[arg(long)]
    communities: PathBuf,
    /// Flow plan CSV (metrics only); planned afresh when unset.
    #[arg(long)]
    flows: Option<PathBuf>,
}

fn gen(args: &GenArgs) -> anyhow::Result<()> {
    if !(args.jitter_min > 0.0 && args.jitter_min <= args.jitter_max) {
        return Err(Error::InvalidConfig("jitter range must satisfy 0 < min <= max".into()).into());
    }
    let traces = match &args.traces {
        Some(p) => TraceSet::from_csv(p, args.cadence)?,
        None => TraceSet::bundled(),
    };
    let geo = match &args.geo {
        Some(p) => read_geo_pool(p)?,
        None => bundled_geo_pool(),
    };
    let cfg = GenerateConfig {
        jitter: (args.jitter_min, args.jitter_max),
        ..GenerateConfig::new(args.n, args.mode, args.len, args.seed)
    };
    let fleet = generate_fleet(&traces, &geo, &cfg)?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    io::write_fleet(&fleet, &args.out.join("microgrids.csv"), &args.out.join("energy.csv"))?;
    pipeline::write_echo(&args.out, &toml::to_string(args)?)?;
    let (pos, neg, mixed) = fleet.sign_census();
    println!("{} microgrids x {} readings: {pos} positive, {neg} negative, {mixed} mixed", fleet.len(), fleet.timestamps());
    Ok(())
}

fn discover(o: &Overrides) -> anyhow::Result<()> {
    let cfg = o.resolve()?;
    cfg.validate()?;
    let raw = pipeline::read_fleet(pipeline::data_dir(&cfg)?)?;
    let out = pipeline::out_dir(&cfg)?;
    pipeline::write_echo(&out, &cfg.to_toml())?;
    let subs = pipeline::substations(&cfg, &raw)?;
    let fleet = pipeline::prepare(&raw, &cfg)?;
    log::info!("{} on {} microgrids x {} readings", cfg.algorithm.name(), fleet.len(), fleet.timestamps());
    let mut partial = None;
    let run = match pipeline::run(&cfg, &fleet, &subs, &mut partial) {
        Ok(r) => r,
        Err(e) => {
            if let Some(trace) = partial {
                io::write_search_trace(&trace, &out.join("trace.csv"))?;
            }
            return Err(e);
        }
    };
    pipeline::write_run(&out, &fleet, &subs, &run)?;
    print!("{}", run.report.to_text());
    Ok(())
}

fn stored(args: &StoredArgs) -> anyhow::Result<(config::DiscoveryConfig, energy_communities::MicrogridFleet, energy_communities::Substations, CommunityAssignment)> {
    let cfg = args.overrides.resolve()?;
    cfg.loss().validate()?;
    pipeline::ensure_file(&args.communities)?;
    let raw = pipeline::read_fleet(pipeline::data_dir(&cfg)?)?;
    let subs = pipeline::substations(&cfg, &raw)?;
    let fleet = pipeline::prepare(&raw, &cfg)?;
    let a = io::read_assignment(&args.communities, &fleet, cfg.algorithm.kind())?;
    Ok((cfg, fleet, subs, a))
}

fn flow(args: &StoredArgs) -> anyhow::Result<()> {
    let (cfg, fleet, subs, a) = stored(args)?;
    let out = pipeline::out_dir(&cfg)?;
    pipeline::write_echo(&out, &cfg.to_toml())?;
    let plan = build_flow_plan(&fleet, &a, &cfg.loss(), cfg.objective, &subs)?;
    io::write_flow_plan(&plan, &out.join("flows.csv"))?;
    io::write_substations(&subs, &out.join("substations.csv"))?;
    println!(
        "{} shipments, {} mW shipped, {} mW from the grid, load {}",
        plan.shipments.len(),
        plan.total_shipped(),
        plan.total_topup(),
        plan.total_load()
    );
    Ok(())
}

fn metrics(args: &StoredArgs) -> anyhow::Result<()> {
    let (cfg, fleet, subs, a) = stored(args)?;
    let out = pipeline::out_dir(&cfg)?;
    pipeline::write_echo(&out, &cfg.to_toml())?;
    let plan = match &args.flows {
        Some(p) => io::read_flow_plan(p)?,
        None => build_flow_plan(&fleet, &a, &cfg.loss(), cfg.objective, &subs)?,
    };
    let ctx = ReportContext {
        loss: cfg.loss(),
        substations: Some(&subs),
        benchmark_sse: None,
        runtime_seconds: 0.0,
    };
    let report = summarize(&fleet, &a, Some(&plan), &ctx);
    pipeline::write_report(&out, &report)?;
    print!("{}", report.to_text());
    Ok(())
}

/// 2 for configuration and input problems, 3 when no self-sufficient answer
/// exists, 4 when the search ran out of budget, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Infeasible { .. } | Error::NoPositiveMicrogrids => 3,
                Error::BudgetExhausted { .. } => 4,
                _ => 2,
            };
        }
        if cause.is::<NoPartition>() {
            return 3;
        }
        if cause.is::<std::io::Error>() || cause.is::<toml::ser::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Discover(o) => discover(o),
        Command::Flow(a) => flow(a),
        Command::Metrics(a) => metrics(a),
        Command::Sweep(a) => sweep::sweep(a),
        Command::Oracle(a) => oracle::oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
