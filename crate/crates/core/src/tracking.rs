//! Clustering-based tracking: long-term association of clusters across
//! snapshots by a weighted Euclidean distance over link distance, power and
//! delay.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterSet;
use crate::error::{Error, Result};
use crate::mpc::{Snapshot, DEFAULT_FLOOR_DB, DEFAULT_MAX_DELAY_NS};
use crate::stats::{fit_distribution, DistributionFit, Family};

/// Speed of light in m/ns.
pub const SPEED_OF_LIGHT_M_PER_NS: f64 = 0.299_792_458;
pub const DEFAULT_LINK_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingWeights {
    pub w_d: f64,
    pub w_p: f64,
    pub w_tau: f64,
}

impl TrackingWeights {
    pub fn new(w_d: f64, w_p: f64, w_tau: f64) -> Result<Self> {
        let w = Self { w_d, w_p, w_tau };
        w.validate()?;
        Ok(w)
    }

    pub const DELAY_2D: Self = Self { w_d: 0.05, w_p: 0.0, w_tau: 0.95 };
    pub const POWER_2D: Self = Self { w_d: 0.05, w_p: 0.95, w_tau: 0.0 };
    pub const FULL_3D: Self = Self { w_d: 0.05, w_p: 0.95, w_tau: 0.95 };

    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_d, self.w_p, self.w_tau];
        if ws.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid(format!("tracking weights must lie in [0, 1], got {ws:?}")));
        }
        if ws.iter().all(|&w| w == 0.0) {
            return Err(Error::invalid("tracking weights are all zero"));
        }
        Ok(())
    }

    /// Heuristic magnitude of the delay-distance slope implied by the weights.
    pub fn expected_slope_magnitude(&self) -> Option<f64> {
        (self.w_tau > 0.0).then(|| self.w_d / self.w_tau)
    }
}

impl Default for TrackingWeights {
    fn default() -> Self {
        Self::FULL_3D
    }
}

/// One cluster of one snapshot, with raw and normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterFeature {
    pub snapshot_index: u64,
    pub cluster_id: usize,
    pub link_distance_m: f64,
    pub delay_ns: f64,
    pub power_db: f64,
    pub norm_distance: f64,
    pub norm_power: f64,
    pub norm_delay: f64,
}

/// Per-record feature normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub max_delay_ns: f64,
    pub floor_db: f64,
    pub distance_min_m: f64,
    pub distance_max_m: f64,
}

impl Normalization {
    pub fn for_record(snapshots: &[Snapshot]) -> Self {
        let (lo, hi) = snapshots
            .iter()
            .map(|s| s.distance_m)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        Self {
            max_delay_ns: DEFAULT_MAX_DELAY_NS,
            floor_db: DEFAULT_FLOOR_DB,
            distance_min_m: lo,
            distance_max_m: hi,
        }
    }

    pub fn feature(
        &self,
        snapshot_index: u64,
        cluster_id: usize,
        link_distance_m: f64,
        delay_ns: f64,
        power_db: f64,
    ) -> ClusterFeature {
        let span = self.distance_max_m - self.distance_min_m;
        let norm_distance = if span > 0.0 {
            (link_distance_m - self.distance_min_m) / span
        } else {
            0.0
        };
        ClusterFeature {
            snapshot_index,
            cluster_id,
            link_distance_m,
            delay_ns,
            power_db,
            norm_distance,
            norm_power: ((power_db - self.floor_db) / -self.floor_db).clamp(0.0, 1.0),
            norm_delay: (delay_ns / self.max_delay_ns).clamp(0.0, 1.0),
        }
    }
}

/// Features of every cluster in a record: unweighted mean delay and mean dB
/// power of each non-empty cluster.
pub fn cluster_features(
    snapshots: &[Snapshot],
    clusterings: &[ClusterSet],
    norm: &Normalization,
) -> Result<Vec<ClusterFeature>> {
    if snapshots.len() != clusterings.len() {
        return Err(Error::invalid(format!(
            "{} snapshots but {} clusterings",
            snapshots.len(),
            clusterings.len()
        )));
    }
    let mut out = Vec::new();
    for (s, c) in snapshots.iter().zip(clusterings) {
        if s.index != c.snapshot_index {
            return Err(Error::invalid(format!(
                "clustering of snapshot {} paired with snapshot {}",
                c.snapshot_index, s.index
            )));
        }
        for (id, delay, power) in crate::inter::cluster_means(c, s) {
            out.push(norm.feature(s.index, id, s.distance_m, delay, power));
        }
    }
    Ok(out)
}

pub fn weighted_distance(a: &ClusterFeature, b: &ClusterFeature, w: &TrackingWeights) -> f64 {
    (w.w_d * (a.norm_distance - b.norm_distance).powi(2)
        + w.w_p * (a.norm_power - b.norm_power).powi(2)
        + w.w_tau * (a.norm_delay - b.norm_delay).powi(2))
    .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Members in snapshot order.
    pub members: Vec<ClusterFeature>,
    pub survival_length_m: f64,
}

impl Trajectory {
    fn new(members: Vec<ClusterFeature>) -> Self {
        let survival_length_m = match (members.first(), members.last()) {
            (Some(a), Some(b)) => (b.link_distance_m - a.link_distance_m).abs(),
            _ => 0.0,
        };
        Self { members, survival_length_m }
    }
}

fn normalized(f: &ClusterFeature) -> bool {
    [f.norm_distance, f.norm_power, f.norm_delay]
        .iter()
        .all(|v| (0.0..=1.0).contains(v))
}

/// Greedy association: candidate links between clusters of different
/// snapshots are taken in order of increasing distance, and a link joins the
/// tail of one trajectory to the head of a later one. Links at or above
/// `link_threshold` are never made.
pub fn track(features: &[ClusterFeature], w: &TrackingWeights, link_threshold: f64) -> Result<Vec<Trajectory>> {
    w.validate()?;
    if !(link_threshold >= 0.0) {
        return Err(Error::invalid(format!("link threshold must be non-negative, got {link_threshold}")));
    }
    if let Some(f) = features.iter().find(|f| !normalized(f)) {
        return Err(Error::invalid(format!(
            "cluster {} of snapshot {} has features outside [0, 1]",
            f.cluster_id, f.snapshot_index
        )));
    }
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by_key(|&i| (features[i].snapshot_index, features[i].cluster_id));
    let fs: Vec<ClusterFeature> = order.iter().map(|&i| features[i]).collect();
    if fs.windows(2).any(|p| (p[0].snapshot_index, p[0].cluster_id) == (p[1].snapshot_index, p[1].cluster_id)) {
        return Err(Error::invalid("duplicate (snapshot, cluster) feature"));
    }

    let mut candidates: Vec<(f64, usize, usize)> = (0..fs.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let fs = &fs;
            (i + 1..fs.len())
                .filter(move |&j| fs[j].snapshot_index > fs[i].snapshot_index)
                .filter_map(move |j| {
                    let d = weighted_distance(&fs[i], &fs[j], w);
                    (d < link_threshold).then_some((d, i, j))
                })
        })
        .collect();
    // Index order is (snapshot, cluster id) order, so ties favour earlier and lower ids.
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut next = vec![None; fs.len()];
    let mut prev = vec![None; fs.len()];
    for (_, i, j) in candidates {
        if next[i].is_none() && prev[j].is_none() {
            next[i] = Some(j);
            prev[j] = Some(i);
        }
    }

    let mut out = Vec::new();
    for head in (0..fs.len()).filter(|&i| prev[i].is_none()) {
        let mut members = vec![fs[head]];
        let mut cur = head;
        while let Some(n) = next[cur] {
            members.push(fs[n]);
            cur = n;
        }
        out.push(Trajectory::new(members));
    }
    Ok(out)
}

/// Least-squares slope of raw delay against link distance, in ns/m.
pub fn slope_dd(traj: &Trajectory) -> Result<f64> {
    let n = traj.members.len();
    if n < 2 {
        return Err(Error::UndefinedSlope("trajectory has a single member".into()));
    }
    let mx = traj.members.iter().map(|f| f.link_distance_m).sum::<f64>() / n as f64;
    let y0 = traj.members[0].delay_ns;
    let sxx: f64 = traj.members.iter().map(|f| (f.link_distance_m - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::UndefinedSlope("trajectory spans no link distance".into()));
    }
    let sxy: f64 = traj
        .members
        .iter()
        .map(|f| (f.link_distance_m - mx) * (f.delay_ns - y0))
        .sum();
    Ok(sxy / sxx)
}

/// Link distance and ground-reflection excess delay for a UAV at height
/// `h_a`, ground station at `h_g`, horizontal separation `horizontal_m`.
pub fn ground_reflection(h_a: f64, h_g: f64, horizontal_m: f64) -> (f64, f64) {
    let l = ((h_a + h_g).powi(2) + horizontal_m.powi(2)).sqrt();
    let d = ((h_a - h_g).powi(2) + horizontal_m.powi(2)).sqrt();
    (d, (l - d) / SPEED_OF_LIGHT_M_PER_NS)
}

/// Delay-distance slope of the ground reflection between two horizontal
/// separations, in ns/m.
pub fn ground_reflection_slope(h_a: f64, h_g: f64, horizontal_1: f64, horizontal_2: f64) -> Result<f64> {
    let (d1, t1) = ground_reflection(h_a, h_g, horizontal_1);
    let (d2, t2) = ground_reflection(h_a, h_g, horizontal_2);
    if d1 == d2 {
        return Err(Error::UndefinedSlope("equal link distances".into()));
    }
    Ok((t2 - t1) / (d2 - d1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSummary {
    pub lengths_m: Vec<f64>,
    pub mean_m: f64,
    /// Weibull fit over the strictly positive lengths.
    pub weibull: DistributionFit,
}

pub fn survival_lengths(trajectories: &[Trajectory]) -> Result<SurvivalSummary> {
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories"));
    }
    let lengths_m: Vec<f64> = trajectories.iter().map(|t| t.survival_length_m).collect();
    let positive: Vec<f64> = lengths_m.iter().copied().filter(|&l| l > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::DegenerateSample("every trajectory is a singleton".into()));
    }
    let weibull = fit_distribution(&positive, Family::Weibull)?;
    Ok(SurvivalSummary {
        mean_m: lengths_m.iter().sum::<f64>() / lengths_m.len() as f64,
        lengths_m,
        weibull,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::Distribution;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn norm(span: (f64, f64)) -> Normalization {
        Normalization {
            max_delay_ns: 550.0,
            floor_db: -30.0,
            distance_min_m: span.0,
            distance_max_m: span.1,
        }
    }

    fn family(n: usize, delays: &[(f64, f64)]) -> Vec<ClusterFeature> {
        let nm = norm((10.0, 50.0));
        let mut out = Vec::new();
        for s in 0..n {
            let d = 10.0 + 40.0 * s as f64 / (n - 1) as f64;
            for (c, &(tau, p)) in delays.iter().enumerate() {
                out.push(nm.feature(s as u64, c + 1, d, tau, p));
            }
        }
        out
    }

    #[test]
    fn distance_values() {
        let nm = norm((10.0, 50.0));
        let a = nm.feature(0, 1, 10.0, 40.0, -10.0);
        let b = nm.feature(1, 1, 20.0, 40.0, -10.0);
        assert_eq!(weighted_distance(&a, &a, &TrackingWeights::FULL_3D), 0.0);
        let w0 = TrackingWeights { w_d: 0.0, w_p: 0.95, w_tau: 0.95 };
        assert_eq!(weighted_distance(&a, &b, &w0), 0.0);
        assert_relative_eq!(
            weighted_distance(&a, &b, &TrackingWeights::FULL_3D),
            (0.05f64 * 0.0625).sqrt(),
            epsilon = 1e-12
        );
        assert!((weighted_distance(&a, &b, &TrackingWeights::FULL_3D) - 0.0559).abs() < 1e-4);
    }

    #[test]
    fn constant_cluster_forms_one_trajectory() {
        let f = family(20, &[(60.0, -12.0)]);
        let t = track(&f, &TrackingWeights::FULL_3D, DEFAULT_LINK_THRESHOLD).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].members.len(), 20);
        assert_relative_eq!(t[0].survival_length_m, 40.0);
        assert_eq!(slope_dd(&t[0]).unwrap(), 0.0);
    }

    #[test]
    fn two_families_two_trajectories() {
        let f = family(30, &[(40.0, -12.0), (200.0, -20.0)]);
        let t = track(&f, &TrackingWeights::FULL_3D, DEFAULT_LINK_THRESHOLD).unwrap();
        assert_eq!(t.len(), 2);
        for tr in &t {
            assert_eq!(tr.members.len(), 30);
            assert!(tr.members.iter().all(|m| m.cluster_id == tr.members[0].cluster_id));
        }
    }

    #[test]
    fn zero_threshold_gives_singletons() {
        let f = family(10, &[(40.0, -12.0), (200.0, -20.0)]);
        let t = track(&f, &TrackingWeights::FULL_3D, 0.0).unwrap();
        assert_eq!(t.len(), 20);
        assert!(t.iter().all(|tr| tr.survival_length_m == 0.0));
        assert!(matches!(survival_lengths(&t), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn gaps_are_bridged() {
        let mut f = family(10, &[(40.0, -12.0)]);
        f.remove(4);
        let t = track(&f, &TrackingWeights::FULL_3D, DEFAULT_LINK_THRESHOLD).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].members.len(), 9);
    }

    #[test]
    fn unnormalized_features_are_rejected() {
        let mut f = family(3, &[(40.0, -12.0)]);
        f[1].norm_delay = 1.5;
        assert!(track(&f, &TrackingWeights::FULL_3D, 0.1).is_err());
    }

    #[test]
    fn survival_length_is_distance_span() {
        let nm = norm((10.0, 50.0));
        let t = Trajectory::new(vec![nm.feature(0, 1, 12.0, 30.0, -10.0), nm.feature(5, 1, 17.46, 30.0, -10.0)]);
        assert_relative_eq!(t.survival_length_m, 5.46, epsilon = 1e-12);
        assert_eq!(Trajectory::new(vec![nm.feature(0, 1, 12.0, 30.0, -10.0)]).survival_length_m, 0.0);
    }

    #[test]
    fn ground_reflection_slopes() {
        assert_eq!(ground_reflection_slope(30.0, 0.0, 10.0, 50.0).unwrap(), 0.0);
        let a = ground_reflection_slope(30.0, 0.5, 10.0, 50.0).unwrap();
        assert!(a.abs() < 0.2);
        assert!(a < 0.0);

        let nm = norm((ground_reflection(30.0, 0.5, 10.0).0, ground_reflection(30.0, 0.5, 50.0).0));
        let f: Vec<ClusterFeature> = (0..=40)
            .map(|i| {
                let (d, tau) = ground_reflection(30.0, 0.5, 10.0 + i as f64);
                nm.feature(i, 1, d, tau, -15.0)
            })
            .collect();
        let t = track(&f, &TrackingWeights::FULL_3D, DEFAULT_LINK_THRESHOLD).unwrap();
        assert_eq!(t.len(), 1);
        let s = slope_dd(&t[0]).unwrap();
        assert!((s / a - 1.0).abs() < 0.05, "{s} vs {a}");
    }

    #[test]
    fn survival_weibull_refit() {
        let truth = Distribution::Weibull { scale: 7.11, shape: 1.47 };
        let mut rng = crate::rng::stream(11, 0);
        let nm = norm((0.0, 1e6));
        let trajs: Vec<Trajectory> = (0..10_000)
            .map(|i| {
                let l = truth.sample(&mut rng);
                Trajectory::new(vec![nm.feature(2 * i, 1, 0.0, 30.0, -10.0), nm.feature(2 * i + 1, 1, l, 30.0, -10.0)])
            })
            .collect();
        let s = survival_lengths(&trajs).unwrap();
        let [scale, shape] = s.weibull.params();
        assert!((scale / 7.11 - 1.0).abs() < 0.05);
        assert!((shape / 1.47 - 1.0).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn tracking_partitions_features(
            pts in prop::collection::vec((0u64..15, 1usize..5, 0.0f64..550.0, -30.0f64..0.0), 1..60),
            threshold in 0.0f64..0.5,
        ) {
            let nm = norm((10.0, 50.0));
            let mut seen = std::collections::HashSet::new();
            let f: Vec<ClusterFeature> = pts
                .iter()
                .filter(|p| seen.insert((p.0, p.1)))
                .map(|&(s, c, tau, p)| nm.feature(s, c, 10.0 + s as f64, tau, p))
                .collect();
            let t = track(&f, &TrackingWeights::FULL_3D, threshold).unwrap();
            let total: usize = t.iter().map(|tr| tr.members.len()).sum();
            prop_assert_eq!(total, f.len());
            for tr in &t {
                prop_assert!(tr.members.windows(2).all(|w| w[0].snapshot_index < w[1].snapshot_index));
                prop_assert!(tr.survival_length_m >= 0.0);
            }
        }

        #[test]
        fn distance_is_a_metric(
            a in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
            b in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
            c in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        ) {
            let mk = |x: (f64, f64, f64)| ClusterFeature {
                snapshot_index: 0, cluster_id: 1, link_distance_m: 0.0, delay_ns: 0.0, power_db: 0.0,
                norm_distance: x.0, norm_power: x.1, norm_delay: x.2,
            };
            let (a, b, c) = (mk(a), mk(b), mk(c));
            let w = TrackingWeights::FULL_3D;
            prop_assert!((weighted_distance(&a, &b, &w) - weighted_distance(&b, &a, &w)).abs() < 1e-15);
            prop_assert!(weighted_distance(&a, &c, &w) <= weighted_distance(&a, &b, &w) + weighted_distance(&b, &c, &w) + 1e-12);
        }
    }
}
