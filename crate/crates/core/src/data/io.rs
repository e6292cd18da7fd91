//! CSV artifacts. Every file is UTF-8, comma separated with LF line endings,
//! and is written atomically through a temporary sibling file.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Substations;
use crate::error::{Error, Result};
use crate::flow::{Endpoint, FlowPlan, Shipment};
use crate::geometry::Point;
use crate::mec::AdmissionRow;
use crate::metrics::MetricsReport;
use crate::model::{drop_zero_readings, Assignment, CommunityKind, Fleet, MicrogridId, MicrogridRecord, MilliWatts};
use crate::scalar::Scalar;
use crate::sec::SearchStep;

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidConfig(format!("{other:?}")),
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = writer();
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    finish(path, w)
}

fn write_header_only(path: &Path, header: &[&str]) -> Result<()> {
    let mut w = writer();
    w.write_record(header).map_err(csv_err)?;
    finish(path, w)
}

/// Reads rows after checking the header is one of `accepted`; returns the
/// index of the matched header and `(line, row)` pairs.
fn read_rows<T: DeserializeOwned>(path: &Path, accepted: &[&[&str]]) -> Result<(usize, Vec<(u64, T)>)> {
    let text = fs::read_to_string(path)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::parse(path, 1, e.to_string()))?.clone();
    let found: Vec<&str> = headers.iter().collect();
    let Some(which) = accepted.iter().position(|h| *h == found.as_slice()) else {
        let want: Vec<String> = accepted.iter().map(|h| h.join(",")).collect();
        return Err(Error::parse(path, 1, format!("expected header {}", want.join(" or "))));
    };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: T = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        rows.push((line, row));
    }
    Ok((which, rows))
}

#[derive(Serialize, Deserialize)]
struct LocationRow {
    microgrid_id: u32,
    #[serde(alias = "lon")]
    x: f64,
    #[serde(alias = "lat")]
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct RawLocationRow {
    microgrid_id: u32,
    lon: f64,
    lat: f64,
}

#[derive(Serialize, Deserialize)]
struct EnergyRow {
    microgrid_id: u32,
    timestamp: usize,
    net_energy_mw: i64,
}

const MICROGRID_HEADERS: [&[&str]; 2] = [&["microgrid_id", "x", "y"], &["microgrid_id", "lon", "lat"]];
const ENERGY_HEADER: &[&str] = &["microgrid_id", "timestamp", "net_energy_mw"];

/// Writes `microgrids.csv` and `energy.csv`. Raw coordinates are written
/// when every microgrid has them, so re-ingestion normalizes identically.
pub fn write_fleet<F: Scalar>(fleet: &Fleet<F>, microgrids: &Path, energy: &Path) -> Result<()> {
    let raw = fleet.microgrids().iter().all(|m| m.raw_location.is_some());
    if raw {
        write_rows(
            microgrids,
            fleet.microgrids().iter().map(|m| {
                let p = m.raw_location.expect("checked");
                RawLocationRow {
                    microgrid_id: m.id.0,
                    lon: p.x.as_f64(),
                    lat: p.y.as_f64(),
                }
            }),
        )?;
    } else {
        write_rows(
            microgrids,
            fleet.microgrids().iter().map(|m| LocationRow {
                microgrid_id: m.id.0,
                x: m.location.x.as_f64(),
                y: m.location.y.as_f64(),
            }),
        )?;
    }
    write_rows(
        energy,
        (0..fleet.len()).flat_map(|i| {
            fleet.series(i).iter().enumerate().map(move |(t, &e)| EnergyRow {
                microgrid_id: fleet.id(i).0,
                timestamp: t,
                net_energy_mw: e,
            })
        }),
    )
}

/// Reads and validates a fleet. Microgrids with a zero reading are dropped
/// with a warning.
pub fn read_fleet<F: Scalar>(microgrids: &Path, energy: &Path) -> Result<Fleet<F>> {
    let (which, locs) = read_rows::<LocationRow>(microgrids, &MICROGRID_HEADERS)?;
    let raw = which == 1;
    let mut locations: BTreeMap<u32, Point<F>> = BTreeMap::new();
    for (line, r) in locs {
        if !r.x.is_finite() || !r.y.is_finite() {
            return Err(Error::parse(microgrids, line, "non-finite coordinate"));
        }
        if locations.insert(r.microgrid_id, Point::new(F::of(r.x), F::of(r.y))).is_some() {
            return Err(Error::DuplicateId(MicrogridId(r.microgrid_id)));
        }
    }

    let (_, rows) = read_rows::<EnergyRow>(energy, &[ENERGY_HEADER])?;
    let mut series: BTreeMap<u32, Vec<(usize, MilliWatts, u64)>> = BTreeMap::new();
    for (line, r) in rows {
        if !locations.contains_key(&r.microgrid_id) {
            return Err(Error::parse(energy, line, format!("unknown microgrid {}", r.microgrid_id)));
        }
        series.entry(r.microgrid_id).or_default().push((r.timestamp, r.net_energy_mw, line));
    }
    let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
    for s in series.values() {
        *lengths.entry(s.len()).or_default() += 1;
    }
    let expected = lengths
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        .map_or(0, |(&len, _)| len);

    let mut records = Vec::with_capacity(locations.len());
    for (&id, &location) in &locations {
        let mut s = series.remove(&id).unwrap_or_default();
        if s.len() != expected {
            return Err(Error::WindowMismatch {
                id: MicrogridId(id),
                expected,
                found: s.len(),
            });
        }
        s.sort_by_key(|r| (r.0, r.2));
        for (k, &(t, _, line)) in s.iter().enumerate() {
            if t != k {
                return Err(Error::parse(energy, line, format!("microgrid {id}: expected timestamp {k}, found {t}")));
            }
        }
        records.push(MicrogridRecord {
            id: MicrogridId(id),
            location,
            series: s.into_iter().map(|r| r.1).collect(),
        });
    }
    let records = drop_zero_readings(records);
    if raw {
        Fleet::from_raw(records, 0)
    } else {
        Fleet::new(records, 0)
    }
}

#[derive(Serialize, Deserialize)]
struct MembershipRow {
    community_id: u32,
    microgrid_id: u32,
}

const COMMUNITY_HEADER: &[&str] = &["community_id", "microgrid_id"];

pub fn write_assignment<F: Scalar>(assignment: &Assignment<F>, fleet: &Fleet<F>, path: &Path) -> Result<()> {
    let rows: Vec<MembershipRow> = assignment
        .communities
        .iter()
        .flat_map(|c| {
            c.members.iter().map(move |&i| MembershipRow {
                community_id: c.id,
                microgrid_id: fleet.id(i).0,
            })
        })
        .collect();
    if rows.is_empty() {
        return write_header_only(path, COMMUNITY_HEADER);
    }
    write_rows(path, rows)
}

/// Reads memberships; microgrids not listed become unassigned. Community ids
/// are relabelled `0..` in ascending order.
pub fn read_assignment<F: Scalar>(path: &Path, fleet: &Fleet<F>, kind: CommunityKind) -> Result<Assignment<F>> {
    let (_, rows) = read_rows::<MembershipRow>(path, &[COMMUNITY_HEADER])?;
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut seen = vec![false; fleet.len()];
    for (line, r) in rows {
        let i = fleet
            .index_of(MicrogridId(r.microgrid_id))
            .ok_or_else(|| Error::parse(path, line, format!("unknown microgrid {}", r.microgrid_id)))?;
        if seen[i] {
            return Err(Error::parse(path, line, format!("microgrid {} listed twice", r.microgrid_id)));
        }
        seen[i] = true;
        groups.entry(r.community_id).or_default().push(i);
    }
    let unassigned = (0..fleet.len()).filter(|&i| !seen[i]).collect();
    Ok(Assignment::from_groups(fleet, kind, groups.into_values().collect(), unassigned))
}

#[derive(Serialize, Deserialize)]
struct SubstationRow {
    substation_id: usize,
    x: f64,
    y: f64,
}

pub fn write_substations<F: Scalar>(substations: &Substations<F>, path: &Path) -> Result<()> {
    write_rows(
        path,
        substations.points().iter().enumerate().map(|(k, p)| SubstationRow {
            substation_id: k,
            x: p.x.as_f64(),
            y: p.y.as_f64(),
        }),
    )
}

pub fn read_substations<F: Scalar>(path: &Path) -> Result<Substations<F>> {
    let (_, rows) = read_rows::<SubstationRow>(path, &[&["substation_id", "x", "y"]])?;
    Substations::new(rows.into_iter().map(|(_, r)| Point::new(F::of(r.x), F::of(r.y))).collect())
}

#[derive(Serialize, Deserialize)]
struct ShipmentRow {
    community_id: u32,
    timestamp: usize,
    source: String,
    sink: String,
    amount_mw: i64,
    distance: f64,
    load_contrib: f64,
}

const FLOW_HEADER: &[&str] = &["community_id", "timestamp", "source", "sink", "amount_mw", "distance", "load_contrib"];

pub fn write_flow_plan(plan: &FlowPlan, path: &Path) -> Result<()> {
    if plan.shipments.is_empty() {
        return write_header_only(path, FLOW_HEADER);
    }
    write_rows(
        path,
        plan.shipments.iter().map(|s| ShipmentRow {
            community_id: s.community,
            timestamp: s.timestamp,
            source: s.source.to_string(),
            sink: s.sink.to_string(),
            amount_mw: s.amount_mw,
            distance: s.distance,
            load_contrib: s.load,
        }),
    )
}

pub fn read_flow_plan(path: &Path) -> Result<FlowPlan> {
    let (_, rows) = read_rows::<ShipmentRow>(path, &[FLOW_HEADER])?;
    let mut shipments = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let source: Endpoint = r.source.parse().map_err(|e: String| Error::parse(path, line, e))?;
        let sink: Endpoint = r.sink.parse().map_err(|e: String| Error::parse(path, line, e))?;
        if r.amount_mw < 0 {
            return Err(Error::parse(path, line, "negative amount"));
        }
        shipments.push(Shipment {
            community: r.community_id,
            timestamp: r.timestamp,
            source,
            sink,
            amount_mw: r.amount_mw,
            distance: r.distance,
            load: r.load_contrib,
        });
    }
    Ok(FlowPlan { shipments })
}

const ADMISSION_HEADER: &[&str] = &["community_id", "microgrid_id", "round", "ne_dist", "sp_dist"];

pub fn write_admission_log(rows: &[AdmissionRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return write_header_only(path, ADMISSION_HEADER);
    }
    write_rows(path, rows)
}

pub fn read_admission_log(path: &Path) -> Result<Vec<AdmissionRow>> {
    Ok(read_rows(path, &[ADMISSION_HEADER])?.1.into_iter().map(|(_, r)| r).collect())
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    iteration: usize,
    #[serde(rename = "K")]
    k: usize,
    accepted_objective: f64,
    violation: i64,
    move_description: String,
}

const TRACE_HEADER: &[&str] = &["iteration", "K", "accepted_objective", "violation", "move_description"];

pub fn write_search_trace(steps: &[SearchStep], path: &Path) -> Result<()> {
    if steps.is_empty() {
        return write_header_only(path, TRACE_HEADER);
    }
    write_rows(
        path,
        steps.iter().map(|s| TraceRow {
            iteration: s.iteration,
            k: s.k,
            accepted_objective: s.accepted_objective,
            violation: s.violation_mw,
            move_description: s.description.clone(),
        }),
    )
}

pub fn read_search_trace(path: &Path) -> Result<Vec<SearchStep>> {
    let (_, rows) = read_rows::<TraceRow>(path, &[TRACE_HEADER])?;
    Ok(rows
        .into_iter()
        .map(|(_, r)| SearchStep {
            iteration: r.iteration,
            k: r.k,
            accepted_objective: r.accepted_objective,
            violation_mw: r.violation,
            description: r.move_description,
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
struct KeyValue {
    key: String,
    value: String,
}

pub fn write_metrics(report: &MetricsReport, path: &Path) -> Result<()> {
    write_rows(path, report.entries().into_iter().map(|(key, value)| KeyValue { key, value }))
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport> {
    let (_, rows) = read_rows::<KeyValue>(path, &[&["key", "value"]])?;
    let entries: Vec<(String, String)> = rows.into_iter().map(|(_, r)| (r.key, r.value)).collect();
    MetricsReport::from_entries(&entries).map_err(|e| Error::parse(path, 1, e))
}

/// One `x,y` series per file. The first line is a `#` comment listing the
/// fixed parameters; the header names the swept parameter and the metric.
pub fn write_plot_data(path: &Path, param: &str, metric: &str, fixed: &[(String, String)], points: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("# fixed:");
    for (k, v) in fixed {
        out.push_str(&format!(" {k}={v}"));
    }
    out.push('\n');
    out.push_str(&format!("{param},{metric}\n"));
    for (x, y) in points {
        out.push_str(&format!("{x},{y}\n"));
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_header_names_line_one() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("microgrids.csv");
        let e = dir.path().join("energy.csv");
        fs::write(&m, "1,0.5,0.5\n").unwrap();
        fs::write(&e, "microgrid_id,timestamp,net_energy_mw\n").unwrap();
        match read_fleet::<f64>(&m, &e) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_series_named() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("microgrids.csv");
        let e = dir.path().join("energy.csv");
        fs::write(&m, "microgrid_id,x,y\n1,0.1,0.1\n2,0.2,0.2\n3,0.3,0.3\n").unwrap();
        let mut energy = String::from("microgrid_id,timestamp,net_energy_mw\n");
        for (id, len) in [(1, 4), (2, 3), (3, 4)] {
            for t in 0..len {
                energy.push_str(&format!("{id},{t},-5\n"));
            }
        }
        fs::write(&e, energy).unwrap();
        assert!(matches!(
            read_fleet::<f64>(&m, &e),
            Err(Error::WindowMismatch {
                id: MicrogridId(2),
                expected: 4,
                found: 3
            })
        ));
    }

    #[test]
    fn duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("microgrids.csv");
        let e = dir.path().join("energy.csv");
        fs::write(&m, "microgrid_id,x,y\n1,0.1,0.1\n1,0.2,0.2\n").unwrap();
        fs::write(&e, "microgrid_id,timestamp,net_energy_mw\n1,0,-5\n").unwrap();
        assert!(matches!(read_fleet::<f64>(&m, &e), Err(Error::DuplicateId(MicrogridId(1)))));
    }

    #[test]
    fn bad_value_is_row_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("microgrids.csv");
        let e = dir.path().join("energy.csv");
        fs::write(&m, "microgrid_id,x,y\n1,0.1,0.1\n").unwrap();
        fs::write(&e, "microgrid_id,timestamp,net_energy_mw\n1,0,-5\n1,1,abc\n").unwrap();
        assert!(matches!(read_fleet::<f64>(&m, &e), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn zero_reading_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("microgrids.csv");
        let e = dir.path().join("energy.csv");
        fs::write(&m, "microgrid_id,x,y\n1,0.1,0.1\n2,0.2,0.2\n").unwrap();
        fs::write(&e, "microgrid_id,timestamp,net_energy_mw\n1,0,-5\n2,0,0\n").unwrap();
        let f = read_fleet::<f64>(&m, &e).unwrap();
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn plot_data_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plot.csv");
        write_plot_data(&p, "k", "load", &[("seed".into(), "1".into())], &[(10.0, 2.5)]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "# fixed: seed=1\nk,load\n10,2.5\n");
    }
}
