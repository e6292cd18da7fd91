use std::path::Path;

use clap::{Args, ValueEnum};
use energy_communities::data::io;
use energy_communities::metrics::MetricsReport;
use energy_communities::Error;
use rayon::prelude::*;

use crate::config::{Algorithm, DiscoveryConfig, Overrides};
use crate::pipeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Param {
    /// Number of communities.
    K,
    /// L^t-DBSCAN bound, watts.
    L,
    /// MEC NE threshold, or the L^t-DBSCAN radius.
    Eps,
    /// Window length in readings.
    T,
}

impl Param {
    fn name(self) -> &'static str {
        match self {
            Param::K => "k",
            Param::L => "l",
            Param::Eps => "eps",
            Param::T => "t",
        }
    }

    fn is_integer(self) -> bool {
        matches!(self, Param::K | Param::T)
    }

    /// Config key the parameter writes to.
    fn key(self, algorithm: Algorithm) -> &'static str {
        match (self, algorithm) {
            (Param::K, _) => "k",
            (Param::L, _) => "bound",
            (Param::Eps, Algorithm::Mec) => "eps_ne",
            (Param::Eps, _) => "eps",
            (Param::T, _) => "window_len",
        }
    }

    fn apply(self, cfg: &mut DiscoveryConfig, v: f64) {
        match self {
            Param::K => {
                let k = v as usize;
                cfg.k = k;
                if matches!(cfg.algorithm, Algorithm::SecTabu | Algorithm::SecExact | Algorithm::SecTwophase) {
                    cfg.k_min = Some(k);
                    cfg.k_max = Some(k);
                }
            }
            Param::L => cfg.bound = v,
            Param::Eps if cfg.algorithm == Algorithm::Mec => cfg.eps_ne = v,
            Param::Eps => cfg.eps = v,
            Param::T => cfg.window_len = Some(v as usize),
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_enum)]
    param: Param,
    /// Explicit comma-separated values; overrides --from/--to/--step.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long)]
    from: Option<f64>,
    #[arg(long)]
    to: Option<f64>,
    /// Increment; ten evenly spaced points when unset.
    #[arg(long)]
    step: Option<f64>,
}

fn invalid(msg: String) -> anyhow::Error {
    Error::InvalidConfig(msg).into()
}

impl SweepArgs {
    fn points(&self) -> anyhow::Result<Vec<f64>> {
        let mut values = if !self.values.is_empty() {
            self.values.clone()
        } else {
            let (Some(from), Some(to)) = (self.from, self.to) else {
                return Err(invalid("give --values or both --from and --to".into()));
            };
            if !(from.is_finite() && to.is_finite() && from <= to) {
                return Err(invalid(format!("bad sweep range {from}..{to}")));
            }
            let step = self.step.unwrap_or(if to > from { (to - from) / 9.0 } else { 1.0 });
            if step.is_nan() || step <= 0.0 {
                return Err(invalid("--step must be positive".into()));
            }
            let n = ((to - from) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| from + i as f64 * step).collect()
        };
        if self.param.is_integer() {
            for v in &mut values {
                *v = v.round();
            }
            values.dedup();
        }
        if values.iter().any(|v| !v.is_finite() || (self.param.is_integer() && *v < 1.0)) {
            return Err(invalid(format!("bad values for {}: {values:?}", self.param.name())));
        }
        Ok(values)
    }
}

type Column = (&'static str, fn(&MetricsReport) -> Option<f64>);

const COLUMNS: &[Column] = &[
    ("community_count", |r| Some(r.communities as f64)),
    ("size_avg", |r| Some(r.size_avg)),
    ("size_max", |r| Some(r.size_max as f64)),
    ("net_energy_avg", |r| Some(r.net_energy_avg)),
    ("net_energy_max", |r| Some(r.net_energy_max)),
    ("net_energy_min", |r| Some(r.net_energy_min)),
    ("member_net_energy", |r| Some(r.member_net_energy)),
    ("spatial_sse", |r| Some(r.spatial_sse)),
    ("sse_ratio", |r| r.sse_ratio),
    ("nonnegative_ratio", |r| Some(r.nonnegative_ratio)),
    ("unassigned", |r| Some(r.unassigned as f64)),
    ("load_with", |r| r.load_with),
    ("load_without", |r| r.load_without),
    ("runtime_seconds", |r| Some(r.runtime_seconds)),
];

fn label(param: Param, v: f64) -> String {
    format!("{}-{v}", param.name())
}

/// Effective parameters other than the swept one, for plot headers.
fn fixed(cfg: &DiscoveryConfig, skip: &str) -> anyhow::Result<Vec<(String, String)>> {
    let table: toml::Table = toml::from_str(&cfg.to_toml())?;
    Ok(table
        .into_iter()
        .filter(|(k, _)| k != skip && !matches!(k.as_str(), "data" | "out" | "substations_file"))
        .map(|(k, v)| (k, v.to_string().trim_matches('"').to_string()))
        .collect())
}

fn run_point(cfg: &DiscoveryConfig, raw: &energy_communities::MicrogridFleet, subs: &energy_communities::Substations, dir: &Path) -> anyhow::Result<MetricsReport> {
    let fleet = pipeline::prepare(raw, cfg)?;
    let mut partial = None;
    let run = pipeline::run(cfg, &fleet, subs, &mut partial)?;
    std::fs::create_dir_all(dir)?;
    pipeline::write_echo(dir, &cfg.to_toml())?;
    pipeline::write_run(dir, &fleet, subs, &run)?;
    Ok(run.report)
}

pub fn sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let base = args.overrides.resolve()?;
    let values = args.points()?;
    let configs: Vec<DiscoveryConfig> = values
        .iter()
        .map(|&v| {
            let mut c = base.clone();
            args.param.apply(&mut c, v);
            c
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let raw = pipeline::read_fleet(pipeline::data_dir(&base)?)?;
    let out = pipeline::out_dir(&base)?;
    pipeline::write_echo(&out, &base.to_toml())?;
    let subs = pipeline::substations(&base, &raw)?;
    log::info!("sweeping {} over {values:?}", args.param.name());

    let reports: Vec<anyhow::Result<MetricsReport>> = configs
        .par_iter()
        .zip(values.par_iter())
        .map(|(c, &v)| run_point(c, &raw, &subs, &out.join("points").join(label(args.param, v))))
        .collect();
    let mut ok = Vec::with_capacity(reports.len());
    for (r, v) in reports.into_iter().zip(&values) {
        ok.push((*v, r.map_err(|e| e.context(format!("at {}", label(args.param, *v))))?));
    }

    let key = args.param.key(base.algorithm);
    let fixed = fixed(&base, key)?;
    for (metric, get) in COLUMNS {
        let points: Vec<(f64, f64)> = ok.iter().filter_map(|(v, r)| get(r).map(|y| (*v, y))).collect();
        if points.is_empty() {
            continue;
        }
        io::write_plot_data(&out.join(format!("{metric}.csv")), key, metric, &fixed, &points)?;
    }
    for (v, r) in &ok {
        println!(
            "{}={v}: {} communities, avg size {:.2}, load {:.3} vs {:.3}",
            args.param.name(),
            r.communities,
            r.size_avg,
            r.load_with.unwrap_or(f64::NAN),
            r.load_without.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
