//! Per-cluster descriptors: bounding rectangle and power-decay line, cluster
//! K-factor, cluster RMS delay spread and pooled delay offsets.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterSet;
use crate::error::{Error, Result};
use crate::mpc::{linear_to_db, MultipathComponent, Snapshot};

/// Bounding rectangle of a cluster in the delay/power plane.
///
/// Powers decay along `P = -slope_a * tau + intercept_b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterRectangle {
    pub tau_min: f64,
    pub tau_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Decay rate in dB/ns from the rectangle extremes.
    pub slope_a: f64,
    /// Intercept in dB, anchored at the cluster's mean delay and mean power.
    pub intercept_b: f64,
    /// Decay rate of the least-squares line through the members.
    pub slope_ls: f64,
    /// Rectangle area in dB·ns.
    pub area_b: f64,
    /// Area per member in dB·ns.
    pub ray_unit_area: f64,
    pub member_count: usize,
    pub mean_delay_ns: f64,
    pub mean_power_db: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn rectangle(members: &[MultipathComponent]) -> Result<ClusterRectangle> {
    if members.len() < 2 {
        return Err(Error::DegenerateCluster(format!(
            "rectangle needs at least 2 members, got {}",
            members.len()
        )));
    }
    let fold = |f: fn(&MultipathComponent) -> f64| {
        members.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    };
    let (tau_min, tau_max) = fold(|m| m.delay_ns);
    let (p_min, p_max) = fold(|m| m.power_db);
    let width = tau_max - tau_min;
    if width <= 0.0 {
        return Err(Error::DegenerateCluster(format!(
            "all {} members share delay {tau_min} ns",
            members.len()
        )));
    }
    let slope_a = (p_max - p_min) / width;
    let mean_delay_ns = mean(members.iter().map(|m| m.delay_ns));
    let mean_power_db = mean(members.iter().map(|m| m.power_db));
    let sxx: f64 = members.iter().map(|m| (m.delay_ns - mean_delay_ns).powi(2)).sum();
    let sxy: f64 = members
        .iter()
        .map(|m| (m.delay_ns - mean_delay_ns) * (m.power_db - mean_power_db))
        .sum();
    let area_b = width * (p_max - p_min);
    Ok(ClusterRectangle {
        tau_min,
        tau_max,
        p_min,
        p_max,
        slope_a,
        intercept_b: mean_power_db + slope_a * mean_delay_ns,
        slope_ls: -sxy / sxx,
        area_b,
        ray_unit_area: area_b / members.len() as f64,
        member_count: members.len(),
        mean_delay_ns,
        mean_power_db,
    })
}

/// Ratio of the strongest member's power to the sum of the others, in dB.
pub fn cluster_k_factor(members: &[MultipathComponent]) -> Result<f64> {
    if members.len() < 2 {
        return Err(Error::UndefinedKFactor(format!(
            "cluster has {} member(s)",
            members.len()
        )));
    }
    let powers: Vec<f64> = members.iter().map(|m| m.linear_power()).collect();
    let max = powers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = powers.iter().sum();
    let rest = total - max;
    if rest <= 0.0 {
        return Err(Error::UndefinedKFactor("non-dominant members carry no power".into()));
    }
    Ok(linear_to_db(max / rest))
}

/// Power-weighted RMS delay spread in ns.
pub fn rms_delay_spread(members: &[MultipathComponent]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::invalid("delay spread of an empty path set"));
    }
    let total: f64 = members.iter().map(|m| m.linear_power()).sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::DegenerateProfile("paths carry no finite power".into()));
    }
    let mean = members.iter().map(|m| m.linear_power() * m.delay_ns).sum::<f64>() / total;
    let var = members
        .iter()
        .map(|m| m.linear_power() * (m.delay_ns - mean).powi(2))
        .sum::<f64>()
        / total;
    Ok(var.max(0.0).sqrt())
}

/// Offsets of every member delay from its cluster's unweighted mean delay,
/// pooled over clusters with at least two members.
pub fn delay_offsets(clusters: &ClusterSet, snapshot: &Snapshot) -> Result<Vec<f64>> {
    if clusters.assignments.len() != snapshot.mpcs.len() {
        return Err(Error::invalid(format!(
            "clustering covers {} paths, snapshot {} has {}",
            clusters.assignments.len(),
            snapshot.index,
            snapshot.mpcs.len()
        )));
    }
    let mut out = Vec::with_capacity(snapshot.mpcs.len());
    for group in clusters.groups(snapshot) {
        if group.len() < 2 {
            continue;
        }
        let m = mean(group.iter().map(|p| p.delay_ns));
        out.extend(group.iter().map(|p| p.delay_ns - m));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn mpcs(v: &[(f64, f64)]) -> Vec<MultipathComponent> {
        v.iter().map(|&(d, p)| MultipathComponent::new(d, p, 0.0)).collect()
    }

    #[test]
    fn two_member_rectangle() {
        let r = rectangle(&mpcs(&[(10.0, -5.0), (20.0, -15.0)])).unwrap();
        assert_relative_eq!(r.slope_a, 1.0);
        assert_relative_eq!(r.area_b, 100.0);
        assert_relative_eq!(r.ray_unit_area, 50.0);
        assert_relative_eq!(r.intercept_b, 5.0);
        assert_relative_eq!(r.slope_ls, 1.0);
        assert_eq!(r.member_count, 2);
    }

    #[test]
    fn flat_cluster_has_zero_slope() {
        let r = rectangle(&mpcs(&[(10.0, -7.0), (14.0, -7.0), (30.0, -7.0)])).unwrap();
        assert_eq!(r.slope_a, 0.0);
        assert_eq!(r.p_min, r.p_max);
        assert_eq!(r.area_b, 0.0);
    }

    #[test]
    fn width_follows_unit_area_identity() {
        let r = rectangle(&mpcs(&[(40.0, -10.0), (46.0, -13.0), (52.0, -16.0)])).unwrap();
        let w = (r.ray_unit_area * r.member_count as f64 / r.slope_a).sqrt();
        assert_relative_eq!(w, r.tau_max - r.tau_min, max_relative = 1e-12);
    }

    #[test]
    fn coincident_delays_are_degenerate() {
        let e = rectangle(&mpcs(&[(10.0, -5.0), (10.0, -8.0)])).unwrap_err();
        assert!(matches!(e, Error::DegenerateCluster(_)));
        assert!(rectangle(&mpcs(&[(10.0, -5.0)])).is_err());
    }

    #[test]
    fn k_factor_values() {
        assert_relative_eq!(cluster_k_factor(&mpcs(&[(1.0, -3.0), (2.0, -3.0)])).unwrap(), 0.0, epsilon = 1e-12);
        let four = linear_to_db(4.0);
        let k = cluster_k_factor(&mpcs(&[(1.0, four), (2.0, 0.0), (3.0, 0.0)])).unwrap();
        assert_relative_eq!(k, 10.0 * 2f64.log10(), epsilon = 1e-12);
        assert!((k - 3.01).abs() < 5e-3);
        assert!(matches!(
            cluster_k_factor(&mpcs(&[(1.0, 0.0)])),
            Err(Error::UndefinedKFactor(_))
        ));
    }

    #[test]
    fn delay_spread_values() {
        assert!(rms_delay_spread(&mpcs(&[(12.0, -4.0)])).unwrap() < 1e-12);
        assert_relative_eq!(rms_delay_spread(&mpcs(&[(0.0, 0.0), (100.0, 0.0)])).unwrap(), 50.0, epsilon = 1e-9);
        let s = rms_delay_spread(&mpcs(&[(0.0, linear_to_db(3.0)), (100.0, 0.0)])).unwrap();
        assert_relative_eq!(s, 43.30127, epsilon = 1e-4);
        assert!(rms_delay_spread(&[]).is_err());
    }

    fn clustered(v: &[(f64, usize)]) -> (Snapshot, ClusterSet) {
        let snap = Snapshot::new(0, 100.0, v.iter().map(|&(d, _)| MultipathComponent::new(d, -10.0, 0.0)).collect());
        let k = v.iter().map(|&(_, c)| c).max().unwrap();
        let cs = ClusterSet {
            snapshot_index: 0,
            k,
            assignments: v.iter().map(|&(_, c)| c).collect(),
            centroids: (1..=k).map(|c| c as f64).collect(),
            centroid_powers_db: None,
            objective: 0.0,
        };
        (snap, cs)
    }

    #[test]
    fn offsets_center_each_cluster() {
        let (s, c) = clustered(&[(45.0, 1), (55.0, 1), (80.0, 2), (90.0, 2), (130.0, 3)]);
        let off = delay_offsets(&c, &s).unwrap();
        assert_eq!(off, vec![-5.0, 5.0, -5.0, 5.0]);
    }

    proptest! {
        #[test]
        fn spread_and_k_factor_are_scale_invariant(
            paths in prop::collection::vec((0.0f64..500.0, -30.0f64..0.0), 2..20),
            gain in -20.0f64..20.0,
            shift in -100.0f64..100.0,
        ) {
            let a = mpcs(&paths);
            let b: Vec<_> = paths.iter().map(|&(d, p)| MultipathComponent::new(d + shift, p + gain, 0.0)).collect();
            let sa = rms_delay_spread(&a).unwrap();
            prop_assert!((sa - rms_delay_spread(&b).unwrap()).abs() < 1e-6 * (1.0 + sa));
            let ka = cluster_k_factor(&a).unwrap();
            let kb = cluster_k_factor(&b).unwrap();
            prop_assert!((ka - kb).abs() < 1e-9 * (1.0 + ka.abs()));
        }

        #[test]
        fn slope_ignores_power_translation(
            paths in prop::collection::vec((0.0f64..500.0, -30.0f64..0.0), 2..20),
            gain in -20.0f64..20.0,
        ) {
            let a = mpcs(&paths);
            prop_assume!(rectangle(&a).is_ok());
            let b: Vec<_> = paths.iter().map(|&(d, p)| MultipathComponent::new(d, p + gain, 0.0)).collect();
            let (ra, rb) = (rectangle(&a).unwrap(), rectangle(&b).unwrap());
            prop_assert!((ra.slope_a - rb.slope_a).abs() < 1e-9 * (1.0 + ra.slope_a));
            prop_assert!((ra.area_b - ra.member_count as f64 * ra.ray_unit_area).abs() < 1e-9 * (1.0 + ra.area_b));
            prop_assert!(((rb.intercept_b - ra.intercept_b) - gain).abs() < 1e-9 * (1.0 + ra.intercept_b.abs()));
        }

        #[test]
        fn pooled_offsets_sum_to_zero(
            delays in prop::collection::vec(0.0f64..500.0, 2..30),
            k in 1usize..5,
        ) {
            let v: Vec<(f64, usize)> = delays.iter().enumerate().map(|(i, &d)| (d, 1 + i % k)).collect();
            let (s, c) = clustered(&v);
            let off = delay_offsets(&c, &s).unwrap();
            let scale: f64 = off.iter().map(|x| x.abs()).sum::<f64>() + 1.0;
            prop_assert!(off.iter().sum::<f64>().abs() < 1e-9 * scale);
        }
    }
}
