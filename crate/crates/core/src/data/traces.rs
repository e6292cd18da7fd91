use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;

pub const DEFAULT_CADENCE_SECONDS: u32 = 900;

const SAMPLE_TRACES: &str = include_str!("../../data/sample_traces.csv");
const SAMPLE_GEO: &str = include_str!("../../data/sample_geo.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Consumption,
    Generation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceProfile {
    pub name: String,
    pub kind: ProfileKind,
    /// Watts, one reading per cadence step.
    pub values: Vec<f64>,
}

/// Source power profiles sharing one cadence.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub profiles: Vec<TraceProfile>,
    pub cadence_seconds: u32,
}

impl TraceSet {
    pub fn new(profiles: Vec<TraceProfile>, cadence_seconds: u32) -> Result<Self> {
        if cadence_seconds == 0 {
            return Err(Error::InvalidConfig("trace cadence must be positive".into()));
        }
        for p in &profiles {
            if p.values.is_empty() {
                return Err(Error::InvalidConfig(format!("profile {} is empty", p.name)));
            }
            if let Some(v) = p.values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidConfig(format!("profile {} has invalid reading {v}", p.name)));
            }
        }
        Ok(Self {
            profiles,
            cadence_seconds,
        })
    }

    /// Small synthetic household and generation set shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(SAMPLE_TRACES, Path::new("<bundled traces>"), DEFAULT_CADENCE_SECONDS).expect("bundled traces are valid")
    }

    /// Reads `profile_id,kind,index,watts` rows; `kind` is `consumption` or
    /// `generation` and indices of each profile must run `0..len`.
    pub fn from_csv(path: &Path, cadence_seconds: u32) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path, cadence_seconds)
    }

    fn parse(text: &str, path: &Path, cadence_seconds: u32) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["profile_id", "kind", "index", "watts"] {
            return Err(Error::parse(path, 1, "expected header profile_id,kind,index,watts"));
        }
        let mut profiles: Vec<TraceProfile> = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = row.position().map_or(0, |p| p.line());
            let name = &row[0];
            let kind = match &row[1] {
                "consumption" => ProfileKind::Consumption,
                "generation" => ProfileKind::Generation,
                other => return Err(Error::parse(path, line, format!("unknown kind `{other}`"))),
            };
            let index: usize = row[2].parse().map_err(|_| Error::parse(path, line, "index is not an integer"))?;
            let watts: f64 = row[3].parse().map_err(|_| Error::parse(path, line, "watts is not a number"))?;
            let pos = match profiles.iter().position(|p| p.name == name) {
                Some(p) => p,
                None => {
                    profiles.push(TraceProfile {
                        name: name.to_string(),
                        kind,
                        values: Vec::new(),
                    });
                    profiles.len() - 1
                }
            };
            let p = &mut profiles[pos];
            if p.kind != kind {
                return Err(Error::parse(path, line, format!("profile {name} changes kind")));
            }
            if index != p.values.len() {
                return Err(Error::parse(path, line, format!("profile {name} expected index {}", p.values.len())));
            }
            p.values.push(watts);
        }
        if profiles.is_empty() {
            return Err(Error::parse(path, 1, "no profiles"));
        }
        Self::new(profiles, cadence_seconds)
    }

    pub fn of_kind(&self, kind: ProfileKind) -> Vec<&TraceProfile> {
        self.profiles.iter().filter(|p| p.kind == kind).collect()
    }

    /// Readings per day at this cadence.
    pub fn readings_per_day(&self) -> usize {
        (86_400 / self.cadence_seconds as usize).max(1)
    }
}

/// Raw `lon,lat` locations shipped with the crate.
pub fn bundled_geo_pool() -> Vec<Point<f64>> {
    parse_geo(SAMPLE_GEO, Path::new("<bundled geo pool>")).expect("bundled geo pool is valid")
}

/// Reads a `location_id,lon,lat` file.
pub fn read_geo_pool(path: &Path) -> Result<Vec<Point<f64>>> {
    parse_geo(&std::fs::read_to_string(path)?, path)
}

fn parse_geo(text: &str, path: &Path) -> Result<Vec<Point<f64>>> {
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["location_id", "lon", "lat"] {
        return Err(Error::parse(path, 1, "expected header location_id,lon,lat"));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let lon: f64 = row[1].parse().map_err(|_| Error::parse(path, line, "lon is not a number"))?;
        let lat: f64 = row[2].parse().map_err(|_| Error::parse(path, line, "lat is not a number"))?;
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::parse(path, line, "non-finite coordinate"));
        }
        out.push(Point::new(lon, lat));
    }
    if out.is_empty() {
        return Err(Error::parse(path, 1, "no locations"));
    }
    Ok(out)
}
