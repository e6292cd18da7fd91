#![allow(dead_code)]

use energy_communities::data::{bundled_geo_pool, generate_fleet, nonnegative_subset, FleetMode, GenerateConfig, TraceSet};
use energy_communities::geometry::Point;
use energy_communities::model::{Fleet, MicrogridRecord};
use energy_communities::{MicrogridFleet, MicrogridId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fleet(n: usize, mode: FleetMode, len: usize, seed: u64) -> MicrogridFleet {
    generate_fleet(&TraceSet::bundled(), &bundled_geo_pool(), &GenerateConfig::new(n, mode, len, seed)).unwrap()
}

pub fn consumers(n: usize, len: usize, seed: u64) -> MicrogridFleet {
    fleet(n, FleetMode::ConsumptionOnly, len, seed)
}

pub fn producers(n: usize, len: usize, seed: u64) -> MicrogridFleet {
    let f = fleet(n, FleetMode::GenAndCons, len, seed);
    f.subset(&f.positive_indices(), len).unwrap()
}

/// Mixed fleet trimmed until its total is nonnegative at every timestamp.
pub fn balanced(n: usize, len: usize, seed: u64) -> MicrogridFleet {
    let f = fleet(n, FleetMode::GenAndCons, len, seed);
    f.subset(&nonnegative_subset(&f), len).unwrap()
}

pub fn from_rows(rows: &[((f64, f64), Vec<i64>)]) -> MicrogridFleet {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, (p, s))| MicrogridRecord {
            id: MicrogridId(i as u32),
            location: Point::new(p.0, p.1),
            series: s.clone(),
        })
        .collect();
    Fleet::new(records, 0).unwrap()
}

/// Tiny random fleet with a nonnegative total at every timestamp.
pub fn tiny_balanced(rng: &mut ChaCha8Rng, n: usize, len: usize) -> MicrogridFleet {
    let mut rows: Vec<((f64, f64), Vec<i64>)> = (0..n)
        .map(|_| {
            let p = (rng.gen::<f64>(), rng.gen::<f64>());
            let s = (0..len).map(|_| rng.gen_range(-5_000i64..=5_000) * 1_000).collect();
            (p, s)
        })
        .collect();
    for t in 0..len {
        let total: i64 = rows.iter().map(|r| r.1[t]).sum();
        if total < 0 {
            let k = rng.gen_range(0..n);
            rows[k].1[t] -= total;
        }
    }
    for r in &mut rows {
        for v in &mut r.1 {
            if *v == 0 {
                *v = 1;
            }
        }
    }
    from_rows(&rows)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Number of adjacent pairs that break a non-increasing sequence.
pub fn increases(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[1] > w[0] * (1.0 + 1e-12)).count()
}

pub fn decreases(v: &[f64]) -> usize {
    v.windows(2).filter(|w| w[1] < w[0] * (1.0 - 1e-12)).count()
}

/// Mixed fleet keeping every always-positive microgrid and all but every
/// `drop_every`-th of the rest, then trimmed to a nonnegative total.
pub fn positive_heavy(n: usize, len: usize, seed: u64, drop_every: usize) -> MicrogridFleet {
    let f = fleet(n, FleetMode::GenAndCons, len, seed);
    let rest = f.non_positive_indices();
    let mut keep = f.positive_indices();
    keep.extend(rest.iter().enumerate().filter(|(k, _)| k % drop_every != 0).map(|(_, &i)| i));
    let g = f.subset(&keep, len).unwrap();
    g.subset(&nonnegative_subset(&g), len).unwrap()
}
