use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::synthesize_cir_from_mpcs;
use crate::intra::{cluster_k_factor, rms_delay_spread};
use crate::mpc::{compute_pdp, normalize_and_clip, MultipathComponent, Snapshot, SnapshotRecord};
use crate::stats::{select_best_fit, DistributionFit, MIN_FIT_SAMPLES};

/// Reference mean whole-link K-factor of the simulated channel, in dB.
pub const TARGET_K_FACTOR_DB: f64 = 0.60;
pub const K_FACTOR_TOLERANCE_DB: f64 = 1.5;
/// Reference mean whole-link RMS delay spread, in ns.
pub const TARGET_RMS_DS_NS: f64 = 68.42;
pub const RMS_DS_TOLERANCE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub snapshot_index: u64,
    /// `None` when fewer than two components exist.
    pub k_factor_db: Option<f64>,
    pub rms_ds_ns: f64,
}

/// Whole-link K-factor and RMS delay spread over every component of a
/// snapshot, LOS included.
pub fn snapshot_metrics(snapshot: &Snapshot) -> Result<LinkMetrics> {
    link_metrics(snapshot.index, &snapshot.mpcs)
}

fn link_metrics(snapshot_index: u64, mpcs: &[MultipathComponent]) -> Result<LinkMetrics> {
    let rms_ds_ns = rms_delay_spread(mpcs)?;
    let k_factor_db = match cluster_k_factor(mpcs) {
        Ok(k) => Some(k),
        Err(Error::UndefinedKFactor(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(LinkMetrics { snapshot_index, k_factor_db, rms_ds_ns })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WholeLinkReport {
    pub per_snapshot: Vec<LinkMetrics>,
    pub mean_k_factor_db: Option<f64>,
    pub mean_rms_ds_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_factor_fit: Option<DistributionFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms_ds_fit: Option<DistributionFit>,
}

fn summarize(per_snapshot: Vec<LinkMetrics>) -> Result<WholeLinkReport> {
    if per_snapshot.is_empty() {
        return Err(Error::invalid("no snapshots to evaluate"));
    }
    let ks: Vec<f64> = per_snapshot.iter().filter_map(|m| m.k_factor_db).collect();
    let ds: Vec<f64> = per_snapshot.iter().map(|m| m.rms_ds_ns).collect();
    let best = |xs: &[f64]| (xs.len() >= MIN_FIT_SAMPLES).then(|| select_best_fit(xs).ok()).flatten();
    Ok(WholeLinkReport {
        mean_k_factor_db: (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64),
        mean_rms_ds_ns: ds.iter().sum::<f64>() / ds.len() as f64,
        k_factor_fit: best(&ks),
        rms_ds_fit: best(&ds),
        per_snapshot,
    })
}

/// Per-snapshot whole-link metrics computed directly from the components.
pub fn whole_link_metrics(record: &SnapshotRecord) -> Result<WholeLinkReport> {
    let per: Result<Vec<LinkMetrics>> = record.snapshots.par_iter().map(snapshot_metrics).collect();
    summarize(per?)
}

/// Whole-link metrics of the rebuilt CIRs: each snapshot is rendered on the
/// tap grid, normalized to its peak, clipped at `floor_db`, and every
/// retained tap is treated as one component.
pub fn cir_link_metrics(record: &SnapshotRecord, tap_spacing_ns: f64, floor_db: f64) -> Result<WholeLinkReport> {
    let n_taps = (record.meta.max_delay_ns / tap_spacing_ns).floor() as usize + 1;
    let per: Result<Vec<LinkMetrics>> = record
        .snapshots
        .par_iter()
        .map(|s| {
            let h = synthesize_cir_from_mpcs(&s.mpcs, tap_spacing_ns, n_taps)?;
            let pdp = normalize_and_clip(&compute_pdp(&h, tap_spacing_ns)?, floor_db)?;
            let taps: Vec<MultipathComponent> = pdp
                .retained()
                .map(|(d, p)| MultipathComponent::new(d, p, 0.0))
                .collect();
            link_metrics(s.index, &taps)
        })
        .collect();
    summarize(per?)
}

/// Comparison of a report's means with the reference simulation values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mean_k_factor_db: Option<f64>,
    pub k_factor_target_db: f64,
    pub k_factor_tolerance_db: f64,
    pub k_factor_pass: bool,
    pub mean_rms_ds_ns: f64,
    pub rms_ds_target_ns: f64,
    pub rms_ds_tolerance: f64,
    pub rms_ds_pass: bool,
    pub pass: bool,
}

pub fn validate_against_targets(report: &WholeLinkReport) -> ValidationReport {
    let k_factor_pass = report
        .mean_k_factor_db
        .is_some_and(|k| (k - TARGET_K_FACTOR_DB).abs() <= K_FACTOR_TOLERANCE_DB);
    let rms_ds_pass = (report.mean_rms_ds_ns / TARGET_RMS_DS_NS - 1.0).abs() <= RMS_DS_TOLERANCE;
    ValidationReport {
        mean_k_factor_db: report.mean_k_factor_db,
        k_factor_target_db: TARGET_K_FACTOR_DB,
        k_factor_tolerance_db: K_FACTOR_TOLERANCE_DB,
        k_factor_pass,
        mean_rms_ds_ns: report.mean_rms_ds_ns,
        rms_ds_target_ns: TARGET_RMS_DS_NS,
        rms_ds_tolerance: RMS_DS_TOLERANCE,
        rms_ds_pass,
        pass: k_factor_pass && rms_ds_pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::RecordMeta;
    use crate::synthesis::{synthesize_record, ModelParameters, ScenarioConfig};

    #[test]
    fn los_only_snapshot() {
        let s = Snapshot::new(0, 20.0, vec![MultipathComponent::new(66.7, 0.0, 0.0)]);
        let m = snapshot_metrics(&s).unwrap();
        assert_eq!(m.k_factor_db, None);
        assert!(m.rms_ds_ns < 1e-12);
        assert!(matches!(
            cluster_k_factor(&s.mpcs),
            Err(Error::UndefinedKFactor(_))
        ));
    }

    #[test]
    fn equal_pair_has_zero_k_factor() {
        let s = Snapshot::new(0, 20.0, vec![MultipathComponent::new(10.0, -3.0, 0.0), MultipathComponent::new(30.0, -3.0, 1.0)]);
        let m = snapshot_metrics(&s).unwrap();
        assert!(m.k_factor_db.unwrap().abs() < 1e-12);
        assert!((m.rms_ds_ns - 10.0).abs() < 1e-9);
    }

    #[test]
    fn report_matches_direct_evaluation() {
        let rec = synthesize_record(&ModelParameters::default(), &ScenarioConfig { n_snapshots: 40, ..Default::default() }).unwrap();
        let r = whole_link_metrics(&rec).unwrap();
        for (s, m) in rec.snapshots.iter().zip(&r.per_snapshot) {
            assert_eq!(m.k_factor_db.unwrap(), cluster_k_factor(&s.mpcs).unwrap());
            assert_eq!(m.rms_ds_ns, rms_delay_spread(&s.mpcs).unwrap());
        }
        assert!(r.k_factor_fit.is_some() && r.rms_ds_fit.is_some());
    }

    #[test]
    fn tap_domain_metrics_run() {
        let rec = SnapshotRecord::new(
            RecordMeta::default(),
            vec![Snapshot::new(0, 20.0, vec![MultipathComponent::new(40.0, 0.0, 0.0), MultipathComponent::new(140.0, -6.0, 0.0)])],
        );
        let r = cir_link_metrics(&rec, 2.0, -30.0).unwrap();
        assert!(r.mean_rms_ds_ns > 30.0 && r.mean_rms_ds_ns < 50.0);
        assert!(whole_link_metrics(&SnapshotRecord::new(RecordMeta::default(), vec![])).is_err());
    }
}
