//! Numeric traits the algorithms are generic over.
//!
//! Coordinates, distances and centroid arithmetic use [`Scalar`], which any
//! IEEE float satisfies. Transportation costs use the weaker [`Cost`] bound so
//! the solver can also run over exact rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Floating-point scalar used for locations and distances.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for configuration constants.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant fits the scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arc cost type for the transportation solver.
///
/// Only ring operations and ordering are needed. `tolerance` is the magnitude
/// below which a negative reduced cost is treated as zero; exact types use 0.
pub trait Cost: Num + Copy + PartialOrd + Debug + Send + Sync {
    fn tolerance() -> Self;

    fn from_i64(v: i64) -> Self;

    fn to_f64_lossy(self) -> f64;
}

impl Cost for f64 {
    fn tolerance() -> Self {
        1e-9
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Cost for f32 {
    fn tolerance() -> Self {
        1e-6
    }
    fn from_i64(v: i64) -> Self {
        v as f32
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Cost for i64 {
    fn tolerance() -> Self {
        0
    }
    fn from_i64(v: i64) -> Self {
        v
    }
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Cost for Ratio<i64> {
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
    fn from_i64(v: i64) -> Self {
        Ratio::from_integer(v)
    }
    fn to_f64_lossy(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Cost for Ratio<i128> {
    fn tolerance() -> Self {
        Ratio::from_integer(0)
    }
    fn from_i64(v: i64) -> Self {
        Ratio::from_integer(v as i128)
    }
    fn to_f64_lossy(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}
