use std::fmt::Write as _;

use clap::{Args, ValueEnum};
use energy_communities::data::io;
use energy_communities::kmeans::kmeans;
use energy_communities::oracle::optimal_sse;
use energy_communities::sec::{discover_sec_tabu, exact_sec, require_nonnegative_total, KRange, EXACT_LIMIT};
use energy_communities::Error;

use crate::config::Overrides;
use crate::pipeline::{self, NoPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Tabu search against the minimum-load self-sufficient partition.
    Sec,
    /// K-Means against the minimum-SSE partition.
    Sse,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_enum)]
    target: Target,
}

pub fn oracle(args: &OracleArgs) -> anyhow::Result<()> {
    let cfg = args.overrides.resolve()?;
    cfg.loss().validate()?;
    let raw = pipeline::read_fleet(pipeline::data_dir(&cfg)?)?;
    let subs = pipeline::substations(&cfg, &raw)?;
    let fleet = pipeline::prepare(&raw, &cfg)?;
    if fleet.len() > EXACT_LIMIT {
        return Err(Error::TooLarge(format!("{} microgrids (limit {EXACT_LIMIT})", fleet.len())).into());
    }
    let ks = cfg.k_range().unwrap_or(KRange::single(cfg.k));
    ks.validate()?;
    let mut csv = String::from("target,k,exact,heuristic,ratio\n");
    match args.target {
        Target::Sse => {
            let points = fleet.locations();
            for k in ks.values().into_iter().filter(|&k| k <= fleet.len()) {
                let (_, best) = optimal_sse(&points, k).expect("k <= n");
                let got = kmeans(&points, &energy_communities::kmeans::KMeansConfig { k, ..cfg.kmeans() })?.sse;
                writeln!(csv, "sse,{k},{best},{got},{}", ratio(got, best))?;
            }
        }
        Target::Sec => {
            require_nonnegative_total(&fleet)?;
            let Some((exact, best)) = exact_sec(&fleet, &ks.values(), &cfg.loss(), &subs)? else {
                return Err(NoPartition(format!("{:?}", ks.values())).into());
            };
            let (_, found) = discover_sec_tabu(&fleet, &cfg.tabu(), &subs)?;
            writeln!(
                csv,
                "sec,{}/{},{best},{},{}",
                exact.communities.len(),
                found.k,
                found.objective,
                ratio(found.objective, best)
            )?;
        }
    }
    print!("{csv}");
    if cfg.out.is_some() {
        let out = pipeline::out_dir(&cfg)?;
        pipeline::write_echo(&out, &cfg.to_toml())?;
        io::write_atomic(&out.join("oracle.csv"), csv.as_bytes())?;
    }
    Ok(())
}

fn ratio(got: f64, best: f64) -> f64 {
    if best == 0.0 {
        if got == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        got / best
    }
}
