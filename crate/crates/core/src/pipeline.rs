//! Record-level stages: CIR rendering, MPC estimation, clustering,
//! characterization and tracking of whole records.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{optimal_k, select_k, ClusterSet, Criterion, KCandidate, OptimalKOptions};
use crate::error::{Error, Result};
use crate::estimator::{estimate_mpcs, synthesize_cir_from_mpcs, EstimatorConfig};
use crate::inter::{
    cluster_count_stats, cluster_means, fit_double_exponential, fit_occurrence, ClusterCountStats,
    DoubleExponentialFit, OccurrenceModel,
};
use crate::intra::{cluster_k_factor, delay_offsets, rectangle, rms_delay_spread, ClusterRectangle};
use crate::io::{CirRecord, CirSnapshot};
use crate::mpc::{MultipathComponent, Snapshot, SnapshotRecord};
use crate::stats::{fit_distribution, DistributionFit, Family};
use crate::synthesis::ModelParameters;
use crate::tracking::{
    cluster_features, slope_dd, survival_lengths, track, Normalization, TrackingWeights, Trajectory,
};

/// Renders every snapshot of a record on the tap grid.
pub fn cirs_from_record(record: &SnapshotRecord, tap_spacing_ns: f64) -> Result<CirRecord> {
    if !(tap_spacing_ns > 0.0) {
        return Err(Error::invalid("tap spacing must be positive"));
    }
    let n_taps = (record.meta.max_delay_ns / tap_spacing_ns).floor() as usize + 1;
    let snapshots = record
        .snapshots
        .par_iter()
        .map(|s| {
            let h = synthesize_cir_from_mpcs(&s.mpcs, tap_spacing_ns, n_taps)?;
            Ok(CirSnapshot { index: s.index, distance_m: s.distance_m, taps: h.into_iter().map(Into::into).collect() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CirRecord { meta: record.meta, tap_spacing_ns, seed: record.seed, snapshots })
}

/// Estimates the paths of every CIR in the record.
pub fn estimate_record(cirs: &CirRecord, cfg: &EstimatorConfig) -> Result<SnapshotRecord> {
    cirs.validate()?;
    let cfg = EstimatorConfig { tap_spacing_ns: cirs.tap_spacing_ns, ..*cfg };
    let snapshots = cirs
        .snapshots
        .par_iter()
        .map(|s| {
            let est = estimate_mpcs(&s.samples(), &cfg)?;
            let mpcs = est
                .mpcs
                .into_iter()
                .filter(|m| m.delay_ns <= cirs.meta.max_delay_ns)
                .collect();
            Ok(Snapshot::new(s.index, s.distance_m, mpcs))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut record = SnapshotRecord::new(cirs.meta, snapshots);
    record.seed = cirs.seed;
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotClustering {
    pub snapshot_index: u64,
    /// Path removed as line of sight before clustering.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub los: Option<MultipathComponent>,
    /// Chosen count under the configured criterion.
    pub k: usize,
    pub k_db: Option<usize>,
    pub k_silhouette: Option<usize>,
    pub candidates: Vec<KCandidate>,
    pub clusters: ClusterSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSnapshot {
    pub snapshot_index: u64,
    pub reason: String,
}

/// Per-snapshot clustering of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub options: OptimalKOptions,
    pub los_margin_db: f64,
    pub snapshots: Vec<SnapshotClustering>,
    #[serde(default)]
    pub skipped: Vec<SkippedSnapshot>,
}

impl ClusteringResult {
    /// The clustered paths of `snapshot`: the snapshot with its LOS removed
    /// under the stored margin.
    pub fn paths(&self, snapshot: &Snapshot, clustering: &SnapshotClustering) -> Result<Snapshot> {
        let (rest, _) = snapshot.without_los(self.los_margin_db);
        if rest.mpcs.len() != clustering.clusters.assignments.len() {
            return Err(Error::invalid(format!(
                "clustering of snapshot {} covers {} paths, the record has {}",
                snapshot.index,
                clustering.clusters.assignments.len(),
                rest.mpcs.len()
            )));
        }
        Ok(rest)
    }

    /// Pairs each clustering with its snapshot's clustered paths.
    pub fn pair<'a>(&'a self, record: &'a SnapshotRecord) -> Result<Vec<(Snapshot, &'a SnapshotClustering)>> {
        self.snapshots
            .iter()
            .map(|c| {
                let s = record
                    .snapshots
                    .iter()
                    .find(|s| s.index == c.snapshot_index)
                    .ok_or_else(|| Error::invalid(format!("snapshot {} missing from record", c.snapshot_index)))?;
                Ok((self.paths(s, c)?, c))
            })
            .collect()
    }
}

/// Removes the LOS path of every snapshot and selects the cluster count.
/// Snapshots with too few paths, or with all paths at one delay, are
/// skipped and listed.
pub fn cluster_record(record: &SnapshotRecord, opts: &OptimalKOptions, los_margin_db: f64) -> Result<ClusteringResult> {
    let outcomes = record
        .snapshots
        .par_iter()
        .map(|s| {
            let (rest, los) = s.without_los(los_margin_db);
            let n = rest.mpcs.len();
            if n < opts.k_min.max(2) {
                return Ok(Err(SkippedSnapshot {
                    snapshot_index: s.index,
                    reason: format!("{n} paths after LOS removal, need at least {}", opts.k_min.max(2)),
                }));
            }
            let o = OptimalKOptions { k_max: opts.k_max.min(n), ..*opts };
            match optimal_k(&rest, &o) {
                Ok(best) => Ok(Ok(SnapshotClustering {
                    snapshot_index: s.index,
                    los,
                    k: best.k,
                    k_db: select_k(&best.candidates, Criterion::Db, opts.db_orientation),
                    k_silhouette: select_k(&best.candidates, Criterion::Silhouette, opts.db_orientation),
                    candidates: best.candidates,
                    clusters: best.clusters,
                })),
                Err(e @ (Error::DegenerateSnapshot(_) | Error::DegenerateClustering(_))) => {
                    Ok(Err(SkippedSnapshot { snapshot_index: s.index, reason: e.to_string() }))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut snapshots = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => snapshots.push(c),
            Err(s) => skipped.push(s),
        }
    }
    Ok(ClusteringResult { options: *opts, los_margin_db, snapshots, skipped })
}

/// Descriptors of one cluster of one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub snapshot_index: u64,
    pub cluster_id: usize,
    pub member_count: usize,
    pub mean_delay_ns: f64,
    pub mean_power_db: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rectangle: Option<ClusterRectangle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_factor_db: Option<f64>,
    pub rms_ds_ns: f64,
}

/// One row of the fitted parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<DistributionFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationReport {
    pub clusters: Vec<ClusterRecord>,
    pub parameters: Vec<ParameterRow>,
    pub mean_rays_per_cluster: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_count_db: Option<ClusterCountStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_count_silhouette: Option<ClusterCountStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_index_fit: Option<DoubleExponentialFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_delay_fit: Option<DoubleExponentialFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occurrence: Option<OccurrenceModel>,
    /// Model with every successfully fitted entry replaced.
    pub model: ModelParameters,
    pub warnings: Vec<String>,
}

impl CharacterizationReport {
    pub fn parameter(&self, name: &str) -> Option<&DistributionFit> {
        self.parameters.iter().find(|p| p.name == name).and_then(|p| p.fit.as_ref())
    }
}

fn fit_row(name: &str, samples: &[f64], family: Family) -> ParameterRow {
    match fit_distribution(samples, family) {
        Ok(fit) => ParameterRow { name: name.into(), n: samples.len(), fit: Some(fit), error: None },
        Err(e) => ParameterRow { name: name.into(), n: samples.len(), fit: None, error: Some(e.to_string()) },
    }
}

/// Intra- and inter-cluster statistics of a clustered record.
pub fn characterize(record: &SnapshotRecord, clustering: &ClusteringResult) -> Result<CharacterizationReport> {
    let paired = clustering.pair(record)?;
    let mut clusters = Vec::new();
    let mut offsets = Vec::new();
    for (paths, c) in &paired {
        offsets.extend(delay_offsets(&c.clusters, paths)?);
        for (i, members) in c.clusters.groups(paths).iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let n = members.len() as f64;
            clusters.push(ClusterRecord {
                snapshot_index: paths.index,
                cluster_id: i + 1,
                member_count: members.len(),
                mean_delay_ns: members.iter().map(|m| m.delay_ns).sum::<f64>() / n,
                mean_power_db: members.iter().map(|m| m.power_db).sum::<f64>() / n,
                rectangle: rectangle(members).ok(),
                k_factor_db: cluster_k_factor(members).ok(),
                rms_ds_ns: rms_delay_spread(members)?,
            });
        }
    }

    let rects: Vec<&ClusterRectangle> = clusters.iter().filter_map(|c| c.rectangle.as_ref()).collect();
    let decay: Vec<f64> = rects.iter().map(|r| r.slope_a).filter(|&a| a > 0.0).collect();
    let area: Vec<f64> = rects.iter().map(|r| r.ray_unit_area).filter(|&a| a > 0.0).collect();
    let kf: Vec<f64> = clusters.iter().filter_map(|c| c.k_factor_db).collect();
    let ds: Vec<f64> = clusters.iter().map(|c| c.rms_ds_ns).filter(|&d| d > 0.0).collect();
    let parameters = vec![
        fit_row("intra_decay", &decay, Family::Weibull),
        fit_row("ray_unit_area", &area, Family::Weibull),
        fit_row("cluster_k_factor", &kf, Family::Normal),
        fit_row("cluster_rms_ds", &ds, Family::Lognormal),
        fit_row("delay_offset", &offsets, Family::Laplace),
    ];

    let mut warnings = Vec::new();
    let mut count_stats = |ks: Vec<usize>, name: &str| match cluster_count_stats(&ks) {
        Ok(s) => Some(s),
        Err(e) => {
            warnings.push(format!("{name}: {e}"));
            None
        }
    };
    let cluster_count_db = count_stats(paired.iter().filter_map(|(_, c)| c.k_db).collect(), "cluster_count_db");
    let cluster_count_silhouette =
        count_stats(paired.iter().filter_map(|(_, c)| c.k_silhouette).collect(), "cluster_count_silhouette");

    // Per-index averages of the cluster means, for the inter-cluster fits.
    let top = paired.iter().map(|(_, c)| c.k).max().unwrap_or(0);
    let mut per_index = vec![(0.0, 0.0, 0usize); top];
    for (paths, c) in &paired {
        for (k, d, p) in cluster_means(&c.clusters, paths) {
            let e = &mut per_index[k - 1];
            e.0 += d;
            e.1 += p;
            e.2 += 1;
        }
    }
    let means: Vec<(f64, f64, f64)> = per_index
        .iter()
        .enumerate()
        .filter(|(_, e)| e.2 > 0)
        .map(|(i, e)| (i as f64, e.0 / e.2 as f64, e.1 / e.2 as f64))
        .collect();
    let mut fit_curve = |xs: Vec<f64>, ys: Vec<f64>, init: DoubleExponentialFit, name: &str| {
        match fit_double_exponential(&xs, &ys, &init) {
            Ok(f) => Some(f),
            Err(e) => {
                warnings.push(format!("{name}: {e}"));
                None
            }
        }
    };
    let delay_index_fit = fit_curve(
        means.iter().map(|m| m.0).collect(),
        means.iter().map(|m| m.1).collect(),
        DoubleExponentialFit::reference_delay(),
        "delay_index_fit",
    );
    let power_delay_fit = fit_curve(
        means.iter().map(|m| m.1).collect(),
        means.iter().map(|m| m.2).collect(),
        DoubleExponentialFit::reference_power(),
        "power_delay_fit",
    );

    let span = top.max(10);
    let mut present = vec![0u64; span];
    for (_, c) in &paired {
        for slot in present.iter_mut().take(c.k) {
            *slot += 1;
        }
    }
    let occurrence = match fit_occurrence(&present, paired.len() as u64) {
        Ok(m) => Some(m),
        Err(e) => {
            warnings.push(format!("occurrence: {e}"));
            None
        }
    };
    for p in &parameters {
        if let Some(e) = &p.error {
            warnings.push(format!("{}: {e}", p.name));
        }
    }

    let mut model = ModelParameters::default();
    let get = |name: &str| parameters.iter().find(|p| p.name == name).and_then(|p| p.fit).map(|f| f.distribution);
    if let Some(d) = get("intra_decay") {
        model.intra_decay = d;
    }
    if let Some(d) = get("ray_unit_area") {
        model.ray_unit_area = d;
    }
    if let Some(d) = get("cluster_k_factor") {
        model.cluster_k_factor = d;
    }
    if let Some(d) = get("cluster_rms_ds") {
        model.cluster_rms_ds = d;
    }
    if let Some(d) = get("delay_offset") {
        model.delay_offset = d;
    }
    for (target, stats) in [
        (&mut model.cluster_count_db, &cluster_count_db),
        (&mut model.cluster_count_silhouette, &cluster_count_silhouette),
    ] {
        if let Some(ClusterCountStats { fit: Some(f), .. }) = stats {
            *target = f.distribution;
        }
    }
    let mean_rays_per_cluster = if clusters.is_empty() {
        0.0
    } else {
        clusters.iter().map(|c| c.member_count as f64).sum::<f64>() / clusters.len() as f64
    };
    match clustering.options.criterion {
        Criterion::Db => model.rays_per_cluster_db = mean_rays_per_cluster.max(f64::MIN_POSITIVE),
        Criterion::Silhouette => model.rays_per_cluster_silhouette = mean_rays_per_cluster.max(f64::MIN_POSITIVE),
    }
    if let Some(f) = delay_index_fit {
        model.delay_index_fit = f;
    }
    if let Some(f) = power_delay_fit {
        model.power_delay_fit = f;
    }
    if let Some(o) = occurrence {
        model.occurrence = o;
    }

    Ok(CharacterizationReport {
        clusters,
        parameters,
        mean_rays_per_cluster,
        cluster_count_db,
        cluster_count_silhouette,
        delay_index_fit,
        power_delay_fit,
        occurrence,
        model,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub id: usize,
    pub n_members: usize,
    pub first_snapshot: u64,
    pub last_snapshot: u64,
    pub survival_length_m: f64,
    pub slope_dd_ns_per_m: Option<f64>,
    pub mean_delay_ns: f64,
    pub mean_power_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub weights: TrackingWeights,
    pub link_threshold: f64,
    pub normalization: Normalization,
    /// Magnitude of the delay-distance slope suggested by the weights.
    pub expected_slope_magnitude: Option<f64>,
    pub rows: Vec<TrajectoryRow>,
    pub trajectories: Vec<Trajectory>,
    pub mean_survival_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survival_weibull: Option<DistributionFit>,
}

pub const TRAJECTORY_CSV_HEADER: [&str; 8] = [
    "id",
    "n_members",
    "first_snapshot",
    "last_snapshot",
    "survival_length_m",
    "slope_dd_ns_per_m",
    "mean_delay_ns",
    "mean_power_db",
];

/// Tracks the clusters of a clustered record.
pub fn track_record(
    record: &SnapshotRecord,
    clustering: &ClusteringResult,
    weights: &TrackingWeights,
    link_threshold: f64,
) -> Result<TrajectoryReport> {
    let paired = clustering.pair(record)?;
    let snapshots: Vec<Snapshot> = paired.iter().map(|(s, _)| s.clone()).collect();
    let sets: Vec<ClusterSet> = paired.iter().map(|(_, c)| c.clusters.clone()).collect();
    let normalization = Normalization::for_record(&record.snapshots);
    let features = cluster_features(&snapshots, &sets, &normalization)?;
    let trajectories = track(&features, weights, link_threshold)?;
    let rows = trajectories
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let n = t.members.len() as f64;
            TrajectoryRow {
                id: i + 1,
                n_members: t.members.len(),
                first_snapshot: t.members[0].snapshot_index,
                last_snapshot: t.members[t.members.len() - 1].snapshot_index,
                survival_length_m: t.survival_length_m,
                slope_dd_ns_per_m: slope_dd(t).ok(),
                mean_delay_ns: t.members.iter().map(|m| m.delay_ns).sum::<f64>() / n,
                mean_power_db: t.members.iter().map(|m| m.power_db).sum::<f64>() / n,
            }
        })
        .collect();
    let (mean_survival_m, survival_weibull) = if trajectories.is_empty() {
        (0.0, None)
    } else {
        match survival_lengths(&trajectories) {
            Ok(s) => (s.mean_m, Some(s.weibull)),
            Err(_) => (
                trajectories.iter().map(|t| t.survival_length_m).sum::<f64>() / trajectories.len() as f64,
                None,
            ),
        }
    };
    Ok(TrajectoryReport {
        weights: *weights,
        link_threshold,
        normalization,
        expected_slope_magnitude: weights.expected_slope_magnitude(),
        rows,
        trajectories,
        mean_survival_m,
        survival_weibull,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{synthesize_record, ScenarioConfig};

    #[test]
    fn cir_rendering_round_trips_through_estimation() {
        let rec = SnapshotRecord::new(
            Default::default(),
            vec![Snapshot::new(0, 20.0, vec![MultipathComponent::new(40.3, 0.0, 0.4), MultipathComponent::new(120.0, -6.0, 2.0)])],
        );
        let cirs = cirs_from_record(&rec, 2.0).unwrap();
        assert_eq!(cirs.snapshots[0].taps.len(), 276);
        let est = estimate_record(&cirs, &EstimatorConfig::default()).unwrap();
        let m = &est.snapshots[0].mpcs;
        assert_eq!(m.len(), 2);
        assert!((m[0].delay_ns - 40.3).abs() < 0.25);
        assert!((m[1].power_db + 6.0).abs() < 0.1);
    }

    #[test]
    fn synthetic_record_characterizes() {
        let rec = synthesize_record(&ModelParameters::default(), &ScenarioConfig { n_snapshots: 30, ..Default::default() }).unwrap();
        let opts = OptimalKOptions { seed: 3, restarts: 3, ..Default::default() };
        let cl = cluster_record(&rec, &opts, crate::clustering::DEFAULT_LOS_MARGIN_DB).unwrap();
        assert_eq!(cl.snapshots.len() + cl.skipped.len(), 30);
        assert!(cl.snapshots.iter().all(|c| c.los.is_some()));
        let report = characterize(&rec, &cl).unwrap();
        assert!(report.parameter("intra_decay").is_some());
        assert!(report.parameter("delay_offset").is_some());
        assert!(report.cluster_count_db.is_some());
        let t = track_record(&rec, &cl, &TrackingWeights::FULL_3D, 0.1).unwrap();
        let members: usize = t.trajectories.iter().map(|t| t.members.len()).sum();
        assert_eq!(members, cl.snapshots.iter().map(|c| c.k).sum::<usize>());
    }
}
