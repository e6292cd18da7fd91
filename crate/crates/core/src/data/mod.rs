//! Trace files, synthetic fleets, substations and the CSV artifacts.

mod generate;
pub mod io;
mod substations;
mod traces;

pub use generate::{generate_fleet, nonnegative_subset, FleetMode, GenerateConfig};
pub use substations::{simulate_substations, Substations, DEFAULT_SUBSTATIONS};
pub use traces::{bundled_geo_pool, read_geo_pool, ProfileKind, TraceProfile, TraceSet, DEFAULT_CADENCE_SECONDS};
