use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Planar coordinate pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point<F> {
    pub x: F,
    pub y: F,
}

impl<F: Scalar> Point<F> {
    pub fn new(x: F, y: F) -> Self {
        Self { x, y }
    }

    pub fn squared_distance(&self, other: &Self) -> F {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &Self, metric: Metric) -> F {
        match metric {
            Metric::Euclidean => self.squared_distance(other).sqrt(),
            Metric::Manhattan => (self.x - other.x).abs() + (self.y - other.y).abs(),
        }
    }

    /// Arithmetic mean of a nonempty set of points.
    pub fn mean<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Self>,
        F: 'a,
    {
        let mut n = 0usize;
        let (mut sx, mut sy) = (F::zero(), F::zero());
        for p in points {
            sx = sx + p.x;
            sy = sy + p.y;
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let n = F::of(n as f64);
        Some(Self::new(sx / n, sy / n))
    }
}

/// Spatial distance measure between microgrid locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "manhattan" | "l1" => Ok(Metric::Manhattan),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

pub fn spatial_distance<F: Scalar>(a: &Point<F>, b: &Point<F>, metric: Metric) -> F {
    a.distance(b, metric)
}

/// Running centroid that stays equal to the mean of everything added.
///
/// Sums are kept rather than the mean so repeated updates do not drift.
#[derive(Debug, Clone, Copy)]
pub struct CentroidAccumulator<F> {
    sum_x: F,
    sum_y: F,
    weight: usize,
}

impl<F: Scalar> CentroidAccumulator<F> {
    pub fn new() -> Self {
        Self {
            sum_x: F::zero(),
            sum_y: F::zero(),
            weight: 0,
        }
    }

    pub fn of(p: Point<F>) -> Self {
        let mut acc = Self::new();
        acc.add(p);
        acc
    }

    pub fn add(&mut self, p: Point<F>) {
        self.add_weighted(p, 1);
    }

    /// Adds `weight` copies of `p`; merges a sub-community by its centroid and size.
    pub fn add_weighted(&mut self, p: Point<F>, weight: usize) {
        let w = F::of(weight as f64);
        self.sum_x = self.sum_x + p.x * w;
        self.sum_y = self.sum_y + p.y * w;
        self.weight += weight;
    }

    pub fn merge(&mut self, other: &Self) {
        self.sum_x = self.sum_x + other.sum_x;
        self.sum_y = self.sum_y + other.sum_y;
        self.weight += other.weight;
    }

    pub fn weight(&self) -> usize {
        self.weight
    }

    pub fn centroid(&self) -> Point<F> {
        if self.weight == 0 {
            return Point::new(F::zero(), F::zero());
        }
        let w = F::of(self.weight as f64);
        Point::new(self.sum_x / w, self.sum_y / w)
    }
}

impl<F: Scalar> Default for CentroidAccumulator<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_zero() {
        let p = Point::new(0.0f64, 0.0);
        assert_eq!(spatial_distance(&p, &p, Metric::Euclidean), 0.0);
        assert_eq!(spatial_distance(&p, &p, Metric::Manhattan), 0.0);
    }

    #[test]
    fn three_four_five() {
        let a = Point::new(0.0f64, 0.0);
        let b = Point::new(0.6, 0.8);
        assert!((spatial_distance(&a, &b, Metric::Euclidean) - 1.0).abs() < 1e-15);
        assert!((spatial_distance(&a, &b, Metric::Manhattan) - 1.4).abs() < 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let a = Point::new(0.0f32, 0.0);
        let b = Point::new(0.6f32, 0.8);
        assert!((a.distance(&b, Metric::Euclidean) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn accumulator_weighted_merge_matches_mean() {
        let pts: [Point<f64>; 3] = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0)];
        let mut left = CentroidAccumulator::of(pts[0]);
        left.add(pts[1]);
        let mut whole = CentroidAccumulator::new();
        whole.add_weighted(left.centroid(), left.weight());
        whole.add(pts[2]);
        let mean = Point::mean(pts.iter()).unwrap();
        assert!((whole.centroid().x - mean.x).abs() < 1e-15);
        assert!((whole.centroid().y - mean.y).abs() < 1e-15);
    }
}
