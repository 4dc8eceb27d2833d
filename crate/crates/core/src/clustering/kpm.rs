//! K-Power-Means under the delay MCD, and the plain K-Means baseline over
//! (delay, power) with 2D Euclidean distance.

use rand::Rng;

use super::mcd::DelayStats;
use super::ClusterSet;
use crate::error::{Error, Result};
use crate::mpc::Snapshot;
use crate::rng;

const MAX_ITERATIONS: usize = 500;

/// One Lloyd run: points, per-point weights, assignment distance.
struct Lloyd<'a, D: Fn(&[f64; 2], &[f64; 2]) -> f64> {
    points: &'a [[f64; 2]],
    weights: &'a [f64],
    dist: D,
}

/// Outcome of a single initialization.
#[derive(Debug, Clone)]
pub(crate) struct Run {
    pub assignments: Vec<usize>,
    pub centroids: Vec<[f64; 2]>,
    pub objective: f64,
    /// Objective after every assignment step.
    pub history: Vec<f64>,
}

impl<D: Fn(&[f64; 2], &[f64; 2]) -> f64> Lloyd<'_, D> {
    fn assign(&self, centroids: &[[f64; 2]]) -> Vec<usize> {
        self.points
            .iter()
            .map(|p| {
                let mut best = 0;
                let mut best_d = f64::INFINITY;
                for (k, c) in centroids.iter().enumerate() {
                    let d = (self.dist)(p, c);
                    if d < best_d {
                        best_d = d;
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    fn objective(&self, assign: &[usize], centroids: &[[f64; 2]]) -> f64 {
        self.points
            .iter()
            .zip(assign)
            .zip(self.weights)
            .map(|((p, &a), w)| w * (self.dist)(p, &centroids[a]).powi(2))
            .sum()
    }

    /// Gives every empty cluster the point with the largest weighted distance
    /// to its centroid, taken from a cluster with more than one member.
    fn repair(&self, assign: &mut [usize], centroids: &mut [[f64; 2]]) {
        let k = centroids.len();
        loop {
            let mut counts = vec![0usize; k];
            for &a in assign.iter() {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                return;
            };
            let mut donor = None;
            let mut donor_d = f64::NEG_INFINITY;
            for (i, p) in self.points.iter().enumerate() {
                if counts[assign[i]] < 2 {
                    continue;
                }
                let d = self.weights[i] * (self.dist)(p, &centroids[assign[i]]);
                if d > donor_d {
                    donor_d = d;
                    donor = Some(i);
                }
            }
            let Some(i) = donor else { return };
            assign[i] = empty;
            centroids[empty] = self.points[i];
        }
    }

    fn update(&self, assign: &[usize], k: usize) -> Vec<[f64; 2]> {
        let mut sum = vec![[0.0f64; 2]; k];
        let mut wsum = vec![0.0f64; k];
        let mut count = vec![0usize; k];
        let mut last = vec![0usize; k];
        for (i, ((p, &a), &w)) in self.points.iter().zip(assign).zip(self.weights).enumerate() {
            sum[a][0] += w * p[0];
            sum[a][1] += w * p[1];
            wsum[a] += w;
            count[a] += 1;
            last[a] = i;
        }
        (0..k)
            .map(|c| {
                if count[c] == 1 {
                    self.points[last[c]]
                } else {
                    [sum[c][0] / wsum[c], sum[c][1] / wsum[c]]
                }
            })
            .collect()
    }

    fn run(&self, init: Vec<[f64; 2]>) -> Run {
        let k = init.len();
        let mut centroids = init;
        let mut prev: Option<Vec<usize>> = None;
        let mut history = Vec::new();
        let mut assign;
        let mut iterations = 0;
        loop {
            iterations += 1;
            assign = self.assign(&centroids);
            self.repair(&mut assign, &mut centroids);
            history.push(self.objective(&assign, &centroids));
            if prev.as_ref() == Some(&assign) || iterations >= MAX_ITERATIONS {
                break;
            }
            let next = self.update(&assign, k);
            let fixed = next == centroids;
            centroids = next;
            if fixed {
                break;
            }
            prev = Some(assign);
        }
        let objective = self.objective(&assign, &centroids);
        Run {
            assignments: assign,
            centroids,
            objective,
            history,
        }
    }
}

fn check(snapshot: &Snapshot, k: usize) -> Result<DelayStats> {
    if k < 1 {
        return Err(Error::invalid("cluster count must be at least 1"));
    }
    if k > snapshot.mpcs.len() {
        return Err(Error::invalid(format!(
            "cluster count {k} exceeds the {} paths of snapshot {}",
            snapshot.mpcs.len(),
            snapshot.index
        )));
    }
    DelayStats::from_delays(&snapshot.delays())
}

/// Random initial centroids by D² sampling: the first uniformly, each next
/// one with probability proportional to its squared distance from the
/// nearest centroid chosen so far.
fn seed_centroids<D: Fn(&[f64; 2], &[f64; 2]) -> f64, R: Rng>(lloyd: &Lloyd<'_, D>, k: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let points = lloyd.points;
    let mut chosen = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| (lloyd.dist)(p, &points[chosen[0]]).powi(2)).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if u < d {
                        break;
                    }
                    u -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((lloyd.dist)(p, &points[next]).powi(2));
        }
    }
    chosen.into_iter().map(|i| points[i]).collect()
}

/// Best of `restarts` Lloyd runs, each seeded on its own stream.
fn best_run<D: Fn(&[f64; 2], &[f64; 2]) -> f64>(
    lloyd: &Lloyd<'_, D>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Run {
    let mut best: Option<Run> = None;
    for r in 0..restarts.max(1) {
        let mut rng = rng::stream(seed, r as u64);
        let run = lloyd.run(seed_centroids(lloyd, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    best.expect("at least one restart")
}

/// Diagnostics of a KPM clustering, including the per-iteration objective
/// of the winning restart.
#[derive(Debug, Clone)]
pub struct KpmOutcome {
    pub clusters: ClusterSet,
    pub history: Vec<f64>,
}

/// K-Power-Means over the snapshot's delays.
///
/// Assignment minimizes `P_l * MCD(x_l, c_k)`; centroids are power-weighted
/// mean delays. The tracked objective is the power-weighted sum of squared
/// MCDs, which both steps descend.
pub fn kpm_cluster(snapshot: &Snapshot, k: usize, seed: u64, restarts: usize) -> Result<ClusterSet> {
    kpm_cluster_traced(snapshot, k, seed, restarts).map(|o| o.clusters)
}

pub fn kpm_cluster_traced(
    snapshot: &Snapshot,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KpmOutcome> {
    let stats = check(snapshot, k)?;
    let points: Vec<[f64; 2]> = snapshot.mpcs.iter().map(|m| [m.delay_ns, 0.0]).collect();
    let weights: Vec<f64> = snapshot.mpcs.iter().map(|m| m.linear_power()).collect();
    let scale = stats.scale();
    let lloyd = Lloyd {
        points: &points,
        weights: &weights,
        dist: |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).abs() * scale,
    };
    let run = best_run(&lloyd, k, seed, restarts);
    let history = run.history.clone();
    Ok(KpmOutcome {
        clusters: ClusterSet::from_run(snapshot.index, run, false),
        history,
    })
}

/// K-Means over (delay ns, power dB) with unweighted 2D Euclidean distance.
pub fn km_cluster(snapshot: &Snapshot, k: usize, seed: u64, restarts: usize) -> Result<ClusterSet> {
    check(snapshot, k)?;
    let points: Vec<[f64; 2]> = snapshot
        .mpcs
        .iter()
        .map(|m| [m.delay_ns, m.power_db])
        .collect();
    let weights = vec![1.0; points.len()];
    let lloyd = Lloyd {
        points: &points,
        weights: &weights,
        dist: |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
    };
    let run = best_run(&lloyd, k, seed, restarts);
    Ok(ClusterSet::from_run(snapshot.index, run, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::MultipathComponent;
    use proptest::prelude::*;

    fn snap(v: &[(f64, f64)]) -> Snapshot {
        Snapshot::new(
            0,
            10.0,
            v.iter()
                .map(|&(t, p)| MultipathComponent::new(t, p, 0.0))
                .collect(),
        )
    }

    #[test]
    fn single_cluster_is_power_weighted_mean() {
        let s = snap(&[(10.0, 0.0), (20.0, -3.0), (40.0, -10.0)]);
        let c = kpm_cluster(&s, 1, 1, 3).unwrap();
        let w: Vec<f64> = s.mpcs.iter().map(|m| m.linear_power()).collect();
        let want = (10.0 * w[0] + 20.0 * w[1] + 40.0 * w[2]) / w.iter().sum::<f64>();
        assert!((c.centroids[0] - want).abs() < 1e-9);
        assert!(c.assignments.iter().all(|&a| a == 1));
    }

    /// Exhaustive oracle: best contiguous-or-not 2-partition by weighted SSE.
    fn brute_two_partition(delays: &[f64]) -> (Vec<usize>, f64) {
        let n = delays.len();
        let mut best = (vec![], f64::INFINITY);
        for mask in 1..(1u32 << n) - 1 {
            let mut cost = 0.0;
            for side in [0, 1] {
                let members: Vec<f64> = (0..n)
                    .filter(|i| ((mask >> i) & 1) as usize == side)
                    .map(|i| delays[i])
                    .collect();
                let m = members.iter().sum::<f64>() / members.len() as f64;
                cost += members.iter().map(|d| (d - m).powi(2)).sum::<f64>();
            }
            if cost < best.1 {
                best = ((0..n).map(|i| ((mask >> i) & 1) as usize).collect(), cost);
            }
        }
        best
    }

    #[test]
    fn two_groups_match_exhaustive_oracle() {
        let delays = [10.0, 12.0, 80.0, 82.0];
        let (part, _) = brute_two_partition(&delays);
        assert_eq!(part[0], part[1]);
        assert_eq!(part[2], part[3]);
        assert_ne!(part[0], part[2]);
        let s = snap(&delays.map(|d| (d, -5.0)));
        let c = kpm_cluster(&s, 2, 7, 10).unwrap();
        assert_eq!(c.assignments, vec![1, 1, 2, 2]);
        assert!((c.centroids[0] - 11.0).abs() < 1e-12);
        assert!((c.centroids[1] - 81.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_clusters_have_zero_objective() {
        let s = snap(&[(10.0, 0.0), (13.0, -1.0), (30.0, -2.0), (31.0, -9.0)]);
        let c = kpm_cluster(&s, 4, 3, 5).unwrap();
        assert_eq!(c.assignments, vec![1, 2, 3, 4]);
        assert_eq!(c.objective, 0.0);
    }

    #[test]
    fn errors() {
        let s = snap(&[(10.0, 0.0), (20.0, 0.0)]);
        assert!(matches!(kpm_cluster(&s, 3, 0, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(kpm_cluster(&s, 0, 0, 1), Err(Error::InvalidArgument(_))));
        let d = snap(&[(10.0, 0.0), (10.0, -1.0)]);
        assert!(matches!(kpm_cluster(&d, 1, 0, 1), Err(Error::DegenerateSnapshot(_))));
    }

    #[test]
    fn km_single_cluster_is_unweighted_mean() {
        let s = snap(&[(10.0, 0.0), (20.0, -3.0), (40.0, -12.0)]);
        let c = km_cluster(&s, 1, 1, 3).unwrap();
        assert!((c.centroids[0] - 70.0 / 3.0).abs() < 1e-12);
        assert!((c.centroid_powers_db.as_ref().unwrap()[0] + 5.0).abs() < 1e-12);
    }

    #[test]
    fn km_agrees_with_kpm_on_separated_equal_power_groups() {
        let s = snap(&[
            (10.0, -5.0),
            (12.0, -5.0),
            (14.0, -5.0),
            (90.0, -5.0),
            (92.0, -5.0),
        ]);
        let a = kpm_cluster(&s, 2, 1, 10).unwrap();
        let b = km_cluster(&s, 2, 1, 10).unwrap();
        assert_eq!(a.assignments, b.assignments);
    }

    fn delay_ranges(s: &Snapshot, c: &ClusterSet) -> Vec<(f64, f64)> {
        (1..=c.k)
            .map(|id| {
                let d: Vec<f64> = s
                    .mpcs
                    .iter()
                    .zip(&c.assignments)
                    .filter(|(_, &a)| a == id)
                    .map(|(m, _)| m.delay_ns)
                    .collect();
                (
                    d.iter().copied().fold(f64::INFINITY, f64::min),
                    d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            })
            .collect()
    }

    fn overlaps(r: &[(f64, f64)]) -> bool {
        r.iter()
            .enumerate()
            .any(|(i, a)| r.iter().skip(i + 1).any(|b| a.0 <= b.1 && b.0 <= a.1))
    }

    #[test]
    fn strong_outlier_overlaps_under_km_not_kpm() {
        // A dense weak group with one strong path in its middle, plus a far group.
        let s = snap(&[
            (10.0, -30.0),
            (11.0, -30.0),
            (12.0, 0.0),
            (13.0, -30.0),
            (14.0, -30.0),
            (20.0, -30.0),
            (21.0, -30.0),
        ]);
        let km = km_cluster(&s, 2, 1, 10).unwrap();
        let kpm = kpm_cluster(&s, 2, 1, 10).unwrap();
        assert!(overlaps(&delay_ranges(&s, &km)), "{:?}", km.assignments);
        assert!(!overlaps(&delay_ranges(&s, &kpm)), "{:?}", kpm.assignments);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kpm_invariants(
            paths in prop::collection::vec((0.0f64..550.0, -30.0f64..0.0), 6..30),
            k in 2usize..6,
            seed in 0u64..1000,
        ) {
            let s = snap(&paths);
            let out = kpm_cluster_traced(&s, k, seed, 3).unwrap();
            for w in out.history.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
            }
            let c = &out.clusters;
            // non-empty, ids 1..k
            for id in 1..=k {
                prop_assert!(c.assignments.contains(&id));
            }
            // ascending centroids
            for w in c.centroids.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            // delay-contiguous: sorting by delay, ids never return once left
            let mut order: Vec<usize> = (0..s.mpcs.len()).collect();
            order.sort_by(|&a, &b| s.mpcs[a].delay_ns.total_cmp(&s.mpcs[b].delay_ns));
            let mut seen = std::collections::HashSet::new();
            let mut last = 0;
            for i in order {
                let a = c.assignments[i];
                if a != last {
                    prop_assert!(seen.insert(a), "cluster {} not contiguous", a);
                    last = a;
                }
            }
        }
    }
}
