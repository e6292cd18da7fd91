use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::traces::{ProfileKind, TraceSet};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::model::{watts_to_mw, Fleet, MicrogridId, MicrogridRecord};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FleetMode {
    /// Net energy is minus consumption; every microgrid is always negative.
    ConsumptionOnly,
    GenAndCons,
}

impl FromStr for FleetMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "consumption-only" | "consumption" => Ok(FleetMode::ConsumptionOnly),
            "gen-and-cons" | "mixed" => Ok(FleetMode::GenAndCons),
            other => Err(format!("unknown fleet mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateConfig {
    pub n: usize,
    pub mode: FleetMode,
    pub window_len: usize,
    pub seed: u64,
    /// Each drawn profile is scaled by a uniform factor from this range.
    pub jitter: (f64, f64),
}

impl GenerateConfig {
    pub fn new(n: usize, mode: FleetMode, window_len: usize, seed: u64) -> Self {
        Self {
            n,
            mode,
            window_len,
            seed,
            jitter: (0.7, 1.3),
        }
    }
}

fn microgrid_rng(seed: u64, id: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (id as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Synthesizes a fleet by resampling trace profiles.
///
/// Each microgrid draws a consumption profile (and a generation profile in
/// mixed mode), scales each by its own jitter factor, starts reading at a
/// whole-day offset that wraps around the trace, and takes a location from
/// the pool with replacement. Readings that round to zero become +1 mW.
pub fn generate_fleet<F: Scalar>(traces: &TraceSet, geo_pool: &[Point<F>], cfg: &GenerateConfig) -> Result<Fleet<F>> {
    if cfg.n == 0 {
        return Err(Error::EmptyFleet);
    }
    if geo_pool.is_empty() {
        return Err(Error::InvalidConfig("geo pool is empty".into()));
    }
    let (lo, hi) = cfg.jitter;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!("invalid jitter range [{lo}, {hi}]")));
    }
    let consumption = traces.of_kind(ProfileKind::Consumption);
    let generation = traces.of_kind(ProfileKind::Generation);
    if consumption.is_empty() {
        return Err(Error::InvalidConfig("traces hold no consumption profile".into()));
    }
    if cfg.mode == FleetMode::GenAndCons && generation.is_empty() {
        return Err(Error::InvalidConfig("traces hold no generation profile".into()));
    }
    let available = traces.profiles.iter().map(|p| p.values.len()).min().unwrap_or(0);
    if cfg.window_len == 0 {
        return Err(Error::InvalidConfig("window must hold at least one reading".into()));
    }
    if cfg.window_len > available {
        return Err(Error::WindowTooLong {
            window: cfg.window_len,
            available,
        });
    }
    let per_day = traces.readings_per_day();
    let days = (available / per_day).max(1);

    let records: Vec<MicrogridRecord<F>> = (0..cfg.n as u32)
        .into_par_iter()
        .map(|id| {
            let mut rng = microgrid_rng(cfg.seed, id);
            let cons = consumption[rng.gen_range(0..consumption.len())];
            let cons_scale = rng.gen_range(lo..=hi);
            let gen = match cfg.mode {
                FleetMode::ConsumptionOnly => None,
                FleetMode::GenAndCons => {
                    let g = generation[rng.gen_range(0..generation.len())];
                    Some((g, rng.gen_range(lo..=hi)))
                }
            };
            let offset = if available >= per_day { rng.gen_range(0..days) * per_day } else { 0 };
            let location = geo_pool[rng.gen_range(0..geo_pool.len())];
            let series = (0..cfg.window_len)
                .map(|t| {
                    let k = (offset + t) % available;
                    let supply = gen.map_or(0.0, |(g, s)| g.values[k] * s);
                    let mw = watts_to_mw(supply - cons.values[k] * cons_scale);
                    if mw == 0 {
                        1
                    } else {
                        mw
                    }
                })
                .collect();
            MicrogridRecord {
                id: MicrogridId(id),
                location,
                series,
            }
        })
        .collect();
    Fleet::from_raw(records, 0)
}

/// Indices kept after greedily dropping the microgrid with the most negative
/// total until the fleet aggregate is nonnegative at every timestamp.
pub fn nonnegative_subset<F: Scalar>(fleet: &Fleet<F>) -> Vec<usize> {
    let mut kept: Vec<bool> = vec![true; fleet.len()];
    let mut total = fleet.total_series();
    let mut order: Vec<(i64, usize)> = (0..fleet.len()).map(|i| (fleet.series(i).iter().sum(), i)).collect();
    order.sort();
    for (_, i) in order {
        if total.iter().all(|&e| e >= 0) {
            break;
        }
        kept[i] = false;
        crate::model::sub_series(&mut total, fleet.series(i));
    }
    (0..fleet.len()).filter(|&i| kept[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::traces::TraceProfile;

    fn constant(kind: ProfileKind, w: f64, len: usize) -> TraceProfile {
        TraceProfile {
            name: format!("{kind:?}"),
            kind,
            values: vec![w; len],
        }
    }

    #[test]
    fn constant_consumption() {
        let traces = TraceSet::new(vec![constant(ProfileKind::Consumption, 1172.0, 8)], 900).unwrap();
        let cfg = GenerateConfig {
            jitter: (1.0, 1.0),
            ..GenerateConfig::new(1, FleetMode::ConsumptionOnly, 4, 9)
        };
        let f = generate_fleet(&traces, &[Point::new(3.0, 4.0)], &cfg).unwrap();
        assert_eq!(f.series(0), &[-1_172_000; 4]);
        assert_eq!(f.location(0), Point::new(0.5, 0.5));
    }

    #[test]
    fn equal_profiles_perturbed() {
        let traces = TraceSet::new(
            vec![constant(ProfileKind::Consumption, 800.0, 8), constant(ProfileKind::Generation, 800.0, 8)],
            900,
        )
        .unwrap();
        let cfg = GenerateConfig {
            jitter: (1.0, 1.0),
            ..GenerateConfig::new(3, FleetMode::GenAndCons, 5, 1)
        };
        let f = generate_fleet(&traces, &[Point::new(0.0, 0.0), Point::new(1.0, 2.0)], &cfg).unwrap();
        for i in 0..3 {
            assert!(f.series(i).iter().all(|&e| e == 1));
        }
    }

    #[test]
    fn deterministic() {
        let traces = TraceSet::bundled();
        let pool = crate::data::bundled_geo_pool();
        let cfg = GenerateConfig::new(50, FleetMode::GenAndCons, 96, 42);
        let a = generate_fleet(&traces, &pool, &cfg).unwrap();
        let b = generate_fleet(&traces, &pool, &cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_fleet(&traces, &pool, &GenerateConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn window_too_long() {
        let traces = TraceSet::new(vec![constant(ProfileKind::Consumption, 1.0, 4)], 900).unwrap();
        let cfg = GenerateConfig::new(1, FleetMode::ConsumptionOnly, 5, 0);
        assert!(matches!(
            generate_fleet(&traces, &[Point::new(0.0, 0.0)], &cfg),
            Err(Error::WindowTooLong { window: 5, available: 4 })
        ));
    }

    #[test]
    fn subset_is_nonnegative() {
        let traces = TraceSet::bundled();
        let pool = crate::data::bundled_geo_pool();
        let f = generate_fleet(&traces, &pool, &GenerateConfig::new(200, FleetMode::GenAndCons, 48, 5)).unwrap();
        let keep = nonnegative_subset(&f);
        let sub = f.subset(&keep, 48).unwrap();
        assert!(sub.total_series().iter().all(|&e| e >= 0));
    }
}
