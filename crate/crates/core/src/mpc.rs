//! Multipath components, the snapshots that group them, and power delay profiles.
//!
//! Powers are carried in dB for reporting and interchange. Every weighted
//! computation (centroids, K-factor, delay spread) converts to linear power
//! with [`db_to_linear`] first.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum detectable delay of the sounder.
pub const DEFAULT_MAX_DELAY_NS: f64 = 550.0;
/// Tap spacing for a 500 MHz sounder.
pub const DEFAULT_TAP_SPACING_NS: f64 = 2.0;
/// Dynamic range kept after normalization.
pub const DEFAULT_FLOOR_DB: f64 = -30.0;
/// Maximum number of estimated paths per snapshot.
pub const DEFAULT_MAX_PATHS: usize = 50;
pub const DEFAULT_FREQUENCY_HZ: f64 = 6.5e9;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 5e8;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(p: f64) -> f64 {
    10.0 * p.log10()
}

/// One resolvable propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultipathComponent {
    pub delay_ns: f64,
    /// `|alpha|^2` in dB.
    pub power_db: f64,
    /// Phase of the complex amplitude, in `[0, 2pi)`.
    pub phase_rad: f64,
    /// Position within the owning snapshot; not serialized.
    #[serde(skip)]
    pub path_id: usize,
}

impl MultipathComponent {
    pub fn new(delay_ns: f64, power_db: f64, phase_rad: f64) -> Self {
        Self {
            delay_ns,
            power_db,
            phase_rad: wrap_phase(phase_rad),
            path_id: 0,
        }
    }

    pub fn from_amplitude(delay_ns: f64, amplitude: Complex64) -> Self {
        Self::new(delay_ns, linear_to_db(amplitude.norm_sqr()), amplitude.arg())
    }

    pub fn with_path_id(mut self, id: usize) -> Self {
        self.path_id = id;
        self
    }

    pub fn linear_power(&self) -> f64 {
        db_to_linear(self.power_db)
    }

    pub fn magnitude(&self) -> f64 {
        self.linear_power().sqrt()
    }

    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.magnitude(), self.phase_rad)
    }
}

/// Maps any angle onto `[0, 2pi)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let p = phase.rem_euclid(TAU);
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// One time instant of the channel record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub index: u64,
    pub distance_m: f64,
    pub mpcs: Vec<MultipathComponent>,
}

impl Snapshot {
    /// Builds a snapshot and numbers its paths in order.
    pub fn new(index: u64, distance_m: f64, mpcs: Vec<MultipathComponent>) -> Self {
        let mut s = Self {
            index,
            distance_m,
            mpcs,
        };
        s.renumber();
        s
    }

    pub fn renumber(&mut self) {
        for (i, m) in self.mpcs.iter_mut().enumerate() {
            m.path_id = i;
        }
    }

    pub fn delays(&self) -> Vec<f64> {
        self.mpcs.iter().map(|m| m.delay_ns).collect()
    }

    /// Index of the strongest path, lowest id on ties.
    pub fn strongest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, m) in self.mpcs.iter().enumerate() {
            match best {
                Some(b) if self.mpcs[b].power_db >= m.power_db => {}
                _ => best = Some(i),
            }
        }
        best
    }

    /// Returns the snapshot with its line-of-sight path removed, when the
    /// strongest path exceeds the runner-up by at least `margin_db`.
    ///
    /// The removed path (if any) is returned alongside.
    pub fn without_los(&self, margin_db: f64) -> (Snapshot, Option<MultipathComponent>) {
        let Some(s) = self.strongest() else {
            return (self.clone(), None);
        };
        let second = self
            .mpcs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != s)
            .map(|(_, m)| m.power_db)
            .fold(f64::NEG_INFINITY, f64::max);
        if self.mpcs[s].power_db - second >= margin_db {
            let mut rest = self.mpcs.clone();
            let los = rest.remove(s);
            (Snapshot::new(self.index, self.distance_m, rest), Some(los))
        } else {
            (self.clone(), None)
        }
    }
}

/// Sounder metadata carried by every record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordMeta {
    pub frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub max_delay_ns: f64,
}

impl Default for RecordMeta {
    fn default() -> Self {
        Self {
            frequency_hz: DEFAULT_FREQUENCY_HZ,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            max_delay_ns: DEFAULT_MAX_DELAY_NS,
        }
    }
}

/// A time-varying channel record: ordered snapshots plus metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotRecord {
    pub meta: RecordMeta,
    /// Seed of the run that produced the record, when randomized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub snapshots: Vec<Snapshot>,
}

impl SnapshotRecord {
    pub fn new(meta: RecordMeta, snapshots: Vec<Snapshot>) -> Self {
        Self {
            meta,
            seed: None,
            snapshots,
        }
    }

    /// Checks the record invariants. `max_mpcs` bounds the path count of
    /// estimated records; synthesized records may legitimately exceed it.
    pub fn validate(&self, max_mpcs: Option<usize>) -> Result<()> {
        let mut prev: Option<u64> = None;
        for s in &self.snapshots {
            if let Some(p) = prev {
                if s.index <= p {
                    return Err(Error::invalid(format!(
                        "snapshot indices must increase strictly ({} after {})",
                        s.index, p
                    )));
                }
            }
            prev = Some(s.index);
            if !(s.distance_m > 0.0) {
                return Err(Error::invalid(format!(
                    "snapshot {}: link distance must be positive",
                    s.index
                )));
            }
            if let Some(max) = max_mpcs {
                if s.mpcs.len() > max {
                    return Err(Error::invalid(format!(
                        "snapshot {}: {} paths exceeds maximum {}",
                        s.index,
                        s.mpcs.len(),
                        max
                    )));
                }
            }
            for m in &s.mpcs {
                if !(m.delay_ns >= 0.0 && m.delay_ns <= self.meta.max_delay_ns) {
                    return Err(Error::invalid(format!(
                        "snapshot {}: delay {} ns outside [0, {}]",
                        s.index, m.delay_ns, self.meta.max_delay_ns
                    )));
                }
                if !m.power_db.is_finite() {
                    return Err(Error::invalid(format!(
                        "snapshot {}: non-finite power",
                        s.index
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Power per delay bin, in dB. Dropped taps are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub tap_spacing_ns: f64,
    pub taps: Vec<Option<f64>>,
}

impl PowerDelayProfile {
    /// Retained `(delay_ns, power_db)` pairs.
    pub fn retained(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.taps
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|p| (i as f64 * self.tap_spacing_ns, p)))
    }
}

/// Squared magnitude of each tap, in dB. No normalization is applied; a
/// zero tap maps to an absent entry.
pub fn compute_pdp(cir: &[Complex64], tap_spacing_ns: f64) -> Result<PowerDelayProfile> {
    if cir.is_empty() {
        return Err(Error::invalid("empty CIR"));
    }
    let taps = cir
        .iter()
        .map(|h| {
            let p = h.norm_sqr();
            (p > 0.0).then(|| linear_to_db(p))
        })
        .collect();
    Ok(PowerDelayProfile {
        tap_spacing_ns,
        taps,
    })
}

/// Shifts the peak to 0 dB and drops every tap below `floor_db`.
pub fn normalize_and_clip(pdp: &PowerDelayProfile, floor_db: f64) -> Result<PowerDelayProfile> {
    let peak = pdp
        .taps
        .iter()
        .flatten()
        .copied()
        .filter(|p| p.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::DegenerateProfile(
            "power delay profile has no finite tap".into(),
        ));
    }
    let taps = pdp
        .taps
        .iter()
        .map(|t| match t {
            Some(p) if p.is_finite() => {
                let rel = p - peak;
                (rel >= floor_db).then_some(rel)
            }
            _ => None,
        })
        .collect();
    Ok(PowerDelayProfile {
        tap_spacing_ns: pdp.tap_spacing_ns,
        taps,
    })
}
