//! File formats: JSON documents for records, CIRs, clusterings, reports and
//! parameters, CSV for CDL tables and trajectory tables. Every write goes to
//! a temporary file in the target directory and is renamed into place.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{RecordMeta, SnapshotRecord};
use crate::synthesis::{read_cdl_csv, write_cdl_csv, CdlEntry};

fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io { path: path.display().to_string(), message: e.to_string() }
}

/// First backtick-quoted token of a serde message, which names the field.
fn field_of(message: &str) -> String {
    let mut parts = message.split('`');
    match (parts.next(), parts.next()) {
        (Some(_), Some(f)) if !f.is_empty() => f.to_string(),
        _ => "document".to_string(),
    }
}

fn parse_error(path: &Path, e: serde_json::Error) -> Error {
    let message = e.to_string();
    Error::Parse { path: path.display().to_string(), field: field_of(&message), message }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| io_error(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| {
        if e.is_io() {
            io_error(path, e)
        } else {
            parse_error(path, e)
        }
    })
}

/// Writes `bytes` to `path` through a temporary sibling file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(path, e))?;
    tmp.write_all(bytes).map_err(|e| io_error(path, e))?;
    tmp.flush().map_err(|e| io_error(path, e))?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| io_error(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Reads and validates a snapshot record. `max_mpcs` bounds the paths per
/// snapshot when given.
pub fn read_record(path: &Path, max_mpcs: Option<usize>) -> Result<SnapshotRecord> {
    let mut r: SnapshotRecord = read_json(path)?;
    for s in r.snapshots.iter_mut() {
        s.renumber();
    }
    r.validate(max_mpcs).map_err(|e| match e {
        Error::InvalidArgument(message) => Error::Parse {
            path: path.display().to_string(),
            field: "snapshots".into(),
            message,
        },
        other => other,
    })?;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tap {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Tap {
    fn from(c: Complex64) -> Self {
        Self { re: c.re, im: c.im }
    }
}

impl From<Tap> for Complex64 {
    fn from(t: Tap) -> Self {
        Complex64::new(t.re, t.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirSnapshot {
    pub index: u64,
    pub distance_m: f64,
    pub taps: Vec<Tap>,
}

impl CirSnapshot {
    pub fn samples(&self) -> Vec<Complex64> {
        self.taps.iter().map(|&t| t.into()).collect()
    }
}

/// Sampled complex impulse responses on a uniform tap grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirRecord {
    pub meta: RecordMeta,
    pub tap_spacing_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub snapshots: Vec<CirSnapshot>,
}

impl CirRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.tap_spacing_ns > 0.0) {
            return Err(Error::invalid("tap spacing must be positive"));
        }
        if self.snapshots.windows(2).any(|w| w[1].index <= w[0].index) {
            return Err(Error::invalid("snapshot indices must increase strictly"));
        }
        for s in &self.snapshots {
            if s.taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
                return Err(Error::invalid(format!("snapshot {}: non-finite tap", s.index)));
            }
        }
        Ok(())
    }
}

pub fn read_cir_record(path: &Path) -> Result<CirRecord> {
    let r: CirRecord = read_json(path)?;
    r.validate().map_err(|e| Error::Parse {
        path: path.display().to_string(),
        field: "snapshots".into(),
        message: e.to_string(),
    })?;
    Ok(r)
}

pub fn read_cdl(path: &Path) -> Result<Vec<CdlEntry>> {
    let f = File::open(path).map_err(|e| io_error(path, e))?;
    read_cdl_csv(BufReader::new(f), &path.display().to_string())
}

pub fn write_cdl(path: &Path, entries: &[CdlEntry]) -> Result<()> {
    let mut buf = Vec::new();
    write_cdl_csv(&mut buf, entries)?;
    write_atomic(path, &buf)
}

/// Writes rows as CSV with a header derived from the row type.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        wtr.write_record(header).map_err(|e| io_error(path, e))?;
    }
    for r in rows {
        wtr.serialize(r).map_err(|e| io_error(path, e))?;
    }
    let bytes = wtr.into_inner().map_err(|e| io_error(path, e))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::{MultipathComponent, Snapshot};
    use crate::synthesis::{emit_cdl, reference_cdl, ModelParameters};

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let rec = SnapshotRecord::new(
            RecordMeta::default(),
            vec![
                Snapshot::new(0, 12.5, vec![MultipathComponent::new(41.123456789, -3.3, 1.1), MultipathComponent::new(90.0, -17.25, 6.0)]),
                Snapshot::new(3, 13.0, vec![]),
            ],
        );
        write_json(&p, &rec).unwrap();
        assert_eq!(read_record(&p, None).unwrap(), rec);

        let empty = SnapshotRecord::new(RecordMeta::default(), vec![]);
        write_json(&p, &empty).unwrap();
        assert_eq!(read_record(&p, Some(50)).unwrap(), empty);
    }

    #[test]
    fn corrupted_field_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let rec = SnapshotRecord::new(RecordMeta::default(), vec![Snapshot::new(0, 12.5, vec![MultipathComponent::new(41.0, -3.3, 1.1)])]);
        let text = serde_json::to_string(&rec).unwrap().replace("power_db", "pwr_db");
        std::fs::write(&p, text).unwrap();
        match read_record(&p, None) {
            Err(Error::Parse { field, path, .. }) => {
                assert_eq!(field, "pwr_db");
                assert!(path.ends_with("r.json"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_record_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let rec = SnapshotRecord::new(RecordMeta::default(), vec![Snapshot::new(0, 12.5, vec![MultipathComponent::new(600.0, -3.3, 1.1)])]);
        write_json(&p, &rec).unwrap();
        assert!(matches!(read_record(&p, None), Err(Error::Parse { .. })));
        assert!(matches!(read_record(&dir.path().join("missing.json"), None), Err(Error::Io { .. })));
    }

    #[test]
    fn cir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let rec = CirRecord {
            meta: RecordMeta::default(),
            tap_spacing_ns: 2.0,
            seed: Some(4),
            snapshots: vec![CirSnapshot { index: 1, distance_m: 20.0, taps: vec![Tap { re: 0.1, im: -1e-17 }, Tap { re: 1.0 / 3.0, im: 2.5 }] }],
        };
        write_json(&p, &rec).unwrap();
        assert_eq!(read_cir_record(&p).unwrap(), rec);
    }

    #[test]
    fn cdl_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cdl.csv");
        let t = emit_cdl(&ModelParameters::default(), 10).unwrap();
        write_cdl(&p, &t).unwrap();
        assert_eq!(read_cdl(&p).unwrap(), t);
        write_cdl(&p, &reference_cdl()).unwrap();
        assert_eq!(read_cdl(&p).unwrap(), reference_cdl());
    }

    #[test]
    fn params_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("params.json");
        let m = ModelParameters::default();
        write_json(&p, &m).unwrap();
        assert_eq!(read_json::<ModelParameters>(&p).unwrap(), m);
    }
}
