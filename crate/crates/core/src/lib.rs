//! Discovery of energy communities among microgrids.
//!
//! A fleet of microgrids, each with a planar location and a net-energy time
//! series, is grouped into homogeneous (HEC), mixed (MEC) or self-sufficient
//! (SEC) communities. Energy flows inside each community are then planned and
//! the resulting transmission load is compared with trading through the main
//! grid.
//!
//! Algorithms are generic over the coordinate scalar ([`Scalar`], `f32` or
//! `f64`); the aliases at the crate root fix it to `f64`.

pub mod data;
pub mod energy;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod hec;
pub mod kmeans;
pub mod mec;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod sec;

pub use error::{Error, Result};
pub use geometry::Metric;
pub use model::{CommunityKind, MicrogridId, MilliWatts, SignProfile};
pub use scalar::{Cost, Scalar};

pub type Point = geometry::Point<f64>;
pub type MicrogridFleet = model::Fleet<f64>;
pub type Community = model::Community<f64>;
pub type CommunityAssignment = model::Assignment<f64>;
pub type Substations = data::Substations<f64>;
