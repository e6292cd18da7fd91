//! Net-energy (NE) distance between series.
//!
//! `NE(a, b) = sum_t |a(t) + b(t)|` is small when two series cancel each other.
//! It is symmetric but not a metric: `NE(a, a) = 2 sum_t |a(t)|`, which is zero
//! only for the zero series, and the triangle inequality fails.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Fleet, MicrogridId, MilliWatts};
use crate::scalar::Scalar;

pub fn ne_distance(a: &[MilliWatts], b: &[MilliWatts]) -> Result<i64> {
    if a.len() != b.len() {
        return Err(Error::WindowMismatch {
            id: MicrogridId(u32::MAX),
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(ne_distance_unchecked(a, b))
}

#[inline]
pub(crate) fn ne_distance_unchecked(a: &[MilliWatts], b: &[MilliWatts]) -> i64 {
    a.iter().zip(b).map(|(x, y)| (x + y).abs()).sum()
}

/// Fleets above this size estimate the normalization divisor from sampled pairs.
pub const EXACT_NORMALIZATION_LIMIT: usize = 4000;
const SAMPLED_PAIRS: usize = 2_000_000;

/// Divides NE distances by the fleet-wide maximum pairwise NE distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeNormalizer {
    divisor: i64,
    sampled: bool,
}

impl NeNormalizer {
    /// Exact maximum over all pairs for fleets up to
    /// [`EXACT_NORMALIZATION_LIMIT`] microgrids, seeded pair sampling above.
    pub fn for_fleet<F: Scalar>(fleet: &Fleet<F>, seed: u64) -> Self {
        let n = fleet.len();
        if n <= EXACT_NORMALIZATION_LIMIT {
            let mut max = 0;
            for i in 0..n {
                let a = fleet.series(i);
                for j in i + 1..n {
                    max = max.max(ne_distance_unchecked(a, fleet.series(j)));
                }
            }
            Self { divisor: max, sampled: false }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut max = 0;
            for _ in 0..SAMPLED_PAIRS {
                let i = rng.gen_range(0..n);
                let j = rng.gen_range(0..n);
                if i != j {
                    max = max.max(ne_distance_unchecked(fleet.series(i), fleet.series(j)));
                }
            }
            Self { divisor: max, sampled: true }
        }
    }

    pub fn with_divisor(divisor: i64) -> Self {
        Self { divisor, sampled: false }
    }

    pub fn divisor(&self) -> i64 {
        self.divisor
    }

    pub fn is_sampled(&self) -> bool {
        self.sampled
    }

    pub fn normalize(&self, raw: i64) -> f64 {
        if self.divisor == 0 {
            0.0
        } else {
            raw as f64 / self.divisor as f64
        }
    }

    /// Whether a raw NE distance is within a normalized threshold, compared
    /// as `raw <= eps * divisor` to avoid a division per test.
    pub fn within(&self, raw: i64, eps: f64) -> bool {
        if self.divisor == 0 {
            return true;
        }
        raw as f64 <= eps * self.divisor as f64
    }
}

pub fn normalized_ne_distance(a: &[MilliWatts], b: &[MilliWatts], normalizer: &NeNormalizer) -> Result<f64> {
    Ok(normalizer.normalize(ne_distance(a, b)?))
}
