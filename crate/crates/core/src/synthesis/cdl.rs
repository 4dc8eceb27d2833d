use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::params::ModelParameters;
use crate::error::{Error, Result};
use crate::inter::{delay_from_index, power_from_delay};
use crate::intra::rms_delay_spread;
use crate::mpc::MultipathComponent;

/// Printed reference CDL table of the measured suburban channel.
pub const REFERENCE_CDL_CSV: &str = include_str!("../../fixtures/table2_cdl.csv");

/// Delay differences above this (ns) count as a divergence from the table.
pub const DELAY_DIVERGENCE_NS: f64 = 0.005;
/// Power differences above this (dB) count as a divergence from the table.
pub const POWER_DIVERGENCE_DB: f64 = 0.05;

/// One CDL row; index 0 is the LOS path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdlEntry {
    pub index: usize,
    pub delay_ns: f64,
    pub scaled_delay: f64,
    /// Power relative to the LOS path.
    pub power_db: f64,
}

/// Deterministic CDL table: LOS at delay 0 and 0 dB, then clusters
/// `1..=n_clusters` from the delay and power models. Cluster powers are
/// read relative to a 0 dB LOS, and scaled delays are delays divided by the
/// profile's RMS delay spread.
pub fn emit_cdl(params: &ModelParameters, n_clusters: usize) -> Result<Vec<CdlEntry>> {
    if n_clusters < 1 {
        return Err(Error::invalid("a CDL needs at least one cluster"));
    }
    params.validate()?;
    let mut rows = vec![(0usize, 0.0, 0.0)];
    for k in 1..=n_clusters {
        let tau = delay_from_index(k, &params.delay_index_fit)?;
        rows.push((k, tau, power_from_delay(tau, &params.power_delay_fit)?));
    }
    let profile: Vec<MultipathComponent> = rows.iter().map(|&(_, d, p)| MultipathComponent::new(d, p, 0.0)).collect();
    let ds = rms_delay_spread(&profile)?;
    Ok(rows
        .into_iter()
        .map(|(index, delay_ns, power_db)| CdlEntry { index, delay_ns, scaled_delay: delay_ns / ds, power_db })
        .collect())
}

pub fn write_cdl_csv<W: Write>(w: W, entries: &[CdlEntry]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io { path: "<csv>".into(), message: e.to_string() };
    for e in entries {
        wtr.serialize(e).map_err(io)?;
    }
    if entries.is_empty() {
        wtr.write_record(["index", "delay_ns", "scaled_delay", "power_db"]).map_err(io)?;
    }
    wtr.flush().map_err(|e| Error::Io { path: "<csv>".into(), message: e.to_string() })
}

/// Parses a CDL CSV; `source` names the input in error messages.
pub fn read_cdl_csv<R: Read>(r: R, source: &str) -> Result<Vec<CdlEntry>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(|e| parse_error(source, "header", &e))?.clone();
    let expected = ["index", "delay_ns", "scaled_delay", "power_db"];
    if let Some(bad) = headers.iter().find(|h| !expected.contains(h)) {
        return Err(Error::Parse { path: source.into(), field: bad.into(), message: "unknown column".into() });
    }
    if let Some(missing) = expected.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(Error::Parse { path: source.into(), field: (*missing).into(), message: "missing column".into() });
    }
    let entries = rdr
        .deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| parse_error(source, &format!("row {}", i + 1), &e)))
        .collect::<Result<Vec<CdlEntry>>>()?;
    if entries.windows(2).any(|w| w[1].delay_ns < w[0].delay_ns) {
        return Err(Error::Parse { path: source.into(), field: "delay_ns".into(), message: "delays must not decrease".into() });
    }
    Ok(entries)
}

fn parse_error(source: &str, field: &str, e: &csv::Error) -> Error {
    Error::Parse { path: source.into(), field: field.into(), message: e.to_string() }
}

pub fn reference_cdl() -> Vec<CdlEntry> {
    read_cdl_csv(REFERENCE_CDL_CSV.as_bytes(), "reference CDL").expect("bundled table parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdlDifference {
    pub index: usize,
    pub generated_delay_ns: f64,
    pub reference_delay_ns: f64,
    pub generated_power_db: f64,
    pub reference_power_db: f64,
}

impl CdlDifference {
    pub fn delay_diff_ns(&self) -> f64 {
        self.generated_delay_ns - self.reference_delay_ns
    }

    pub fn power_diff_db(&self) -> f64 {
        self.generated_power_db - self.reference_power_db
    }
}

/// Generated table alongside the reference table, with a divergence flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdlReport {
    pub entries: Vec<CdlEntry>,
    pub reference: Vec<CdlEntry>,
    pub differences: Vec<CdlDifference>,
    /// Set when any row's delay or power departs from the reference beyond
    /// its printed precision.
    pub diverges_from_reference: bool,
    pub max_delay_diff_ns: f64,
    pub max_power_diff_db: f64,
}

pub fn compare_with_reference(entries: Vec<CdlEntry>, reference: Vec<CdlEntry>) -> CdlReport {
    let differences: Vec<CdlDifference> = entries
        .iter()
        .filter_map(|e| {
            reference.iter().find(|r| r.index == e.index).map(|r| CdlDifference {
                index: e.index,
                generated_delay_ns: e.delay_ns,
                reference_delay_ns: r.delay_ns,
                generated_power_db: e.power_db,
                reference_power_db: r.power_db,
            })
        })
        .collect();
    let max_delay_diff_ns = differences.iter().map(|d| d.delay_diff_ns().abs()).fold(0.0, f64::max);
    let max_power_diff_db = differences.iter().map(|d| d.power_diff_db().abs()).fold(0.0, f64::max);
    CdlReport {
        diverges_from_reference: max_delay_diff_ns > DELAY_DIVERGENCE_NS
            || max_power_diff_db > POWER_DIVERGENCE_DB
            || differences.len() != reference.len().min(entries.len()),
        max_delay_diff_ns,
        max_power_diff_db,
        entries,
        reference,
        differences,
    }
}

/// Generates the CDL and compares it with the reference table.
pub fn cdl_report(params: &ModelParameters, n_clusters: usize) -> Result<CdlReport> {
    Ok(compare_with_reference(emit_cdl(params, n_clusters)?, reference_cdl()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_table_parses_exactly() {
        let t = reference_cdl();
        assert_eq!(t.len(), 11);
        assert_eq!((t[0].index, t[0].delay_ns, t[0].scaled_delay), (0, 0.0, 0.0));
        assert_eq!(t[0].power_db, -0.0);
        assert_eq!((t[1].delay_ns, t[1].scaled_delay, t[1].power_db), (25.67, 0.472, -8.9));
        assert_eq!((t[10].index, t[10].delay_ns, t[10].scaled_delay, t[10].power_db), (10, 389.58, 3.817, -24.8));
    }

    #[test]
    fn generated_table() {
        let t = emit_cdl(&ModelParameters::default(), 10).unwrap();
        assert_eq!(t.len(), 11);
        assert_eq!((t[0].delay_ns, t[0].scaled_delay, t[0].power_db), (0.0, 0.0, 0.0));
        assert!((t[1].delay_ns - 29.39).abs() < 0.01);
        assert!((t[1].power_db + 13.79).abs() < 0.01);
        assert!(t.windows(2).all(|w| w[1].delay_ns > w[0].delay_ns));
        assert!(emit_cdl(&ModelParameters::default(), 11).is_err());
        assert!(emit_cdl(&ModelParameters::default(), 0).is_err());
    }

    #[test]
    fn divergence_is_flagged() {
        let r = cdl_report(&ModelParameters::default(), 10).unwrap();
        assert!(r.diverges_from_reference);
        assert!((r.differences[1].delay_diff_ns() - 3.72).abs() < 0.01);
        let same = compare_with_reference(reference_cdl(), reference_cdl());
        assert!(!same.diverges_from_reference);
    }

    #[test]
    fn csv_round_trip() {
        let t = emit_cdl(&ModelParameters::default(), 10).unwrap();
        let mut buf = Vec::new();
        write_cdl_csv(&mut buf, &t).unwrap();
        assert_eq!(read_cdl_csv(buf.as_slice(), "mem").unwrap(), t);
        let mut empty = Vec::new();
        write_cdl_csv(&mut empty, &[]).unwrap();
        assert!(read_cdl_csv(empty.as_slice(), "mem").unwrap().is_empty());
    }

    #[test]
    fn bad_column_is_a_parse_error() {
        let bad = REFERENCE_CDL_CSV.replace("power_db", "pwr_db");
        match read_cdl_csv(bad.as_bytes(), "t.csv") {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "pwr_db"),
            other => panic!("{other:?}"),
        }
    }
}
