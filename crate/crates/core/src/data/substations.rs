use crate::error::{Error, Result};
use crate::geometry::{Metric, Point};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::model::Fleet;
use crate::scalar::Scalar;

pub const DEFAULT_SUBSTATIONS: usize = 5;

/// Main-grid substations in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Substations<F> {
    points: Vec<Point<F>>,
}

impl<F: Scalar> Substations<F> {
    pub fn new(points: Vec<Point<F>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("at least one substation is required".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point<F>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest substation and its distance; ties go to the lower index.
    pub fn nearest(&self, p: &Point<F>, metric: Metric) -> (usize, F) {
        let mut best = (0, p.distance(&self.points[0], metric));
        for (k, s) in self.points.iter().enumerate().skip(1) {
            let d = p.distance(s, metric);
            if d < best.1 {
                best = (k, d);
            }
        }
        best
    }

    pub fn average_distance(&self, fleet: &Fleet<F>, metric: Metric) -> F {
        let total: F = fleet
            .microgrids()
            .iter()
            .map(|m| self.nearest(&m.location, metric).1)
            .sum();
        total / F::of(fleet.len() as f64)
    }
}

/// Places `k_sub` substations at the spatial K-Means centroids of the fleet.
pub fn simulate_substations<F: Scalar>(fleet: &Fleet<F>, k_sub: usize, seed: u64) -> Result<Substations<F>> {
    let clustering = kmeans(&fleet.locations(), &KMeansConfig::new(k_sub, seed))?;
    Substations::new(clustering.centroids)
}
