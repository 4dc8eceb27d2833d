use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mcd::{mcd_delay, DelayStats};
use super::{kpm_cluster, ClusterSet, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::mpc::Snapshot;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    #[default]
    Db,
    Silhouette,
}

/// Which extreme of the Davies-Bouldin index is selected. `Min` is the
/// conventional choice; `Max` follows the argmax form literally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DbOrientation {
    #[default]
    Min,
    Max,
}

fn check(snapshot: &Snapshot, clusters: &ClusterSet) -> Result<DelayStats> {
    if clusters.k < 2 {
        return Err(Error::invalid("validity indices need at least two clusters"));
    }
    if clusters.assignments.len() != snapshot.mpcs.len() {
        return Err(Error::invalid("assignment count does not match snapshot"));
    }
    let stats = DelayStats::from_delays(&snapshot.delays())?;
    for i in 0..clusters.k {
        for j in i + 1..clusters.k {
            if mcd_delay(clusters.centroids[i], clusters.centroids[j], &stats) == 0.0 {
                return Err(Error::DegenerateClustering(format!(
                    "clusters {} and {} share a centroid",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    Ok(stats)
}

/// Davies-Bouldin index with MCD compactness and separation.
pub fn db_index(snapshot: &Snapshot, clusters: &ClusterSet) -> Result<f64> {
    let stats = check(snapshot, clusters)?;
    let k = clusters.k;
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (m, &a) in snapshot.mpcs.iter().zip(&clusters.assignments) {
        sum[a - 1] += mcd_delay(m.delay_ns, clusters.centroids[a - 1], &stats);
        count[a - 1] += 1;
    }
    if count.contains(&0) {
        return Err(Error::DegenerateClustering("empty cluster".into()));
    }
    let compact: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let total: f64 = (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| {
                    (compact[i] + compact[j])
                        / mcd_delay(clusters.centroids[i], clusters.centroids[j], &stats)
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(total / k as f64)
}

/// Mean silhouette under the MCD; members of singleton clusters score 0.
pub fn silhouette_index(snapshot: &Snapshot, clusters: &ClusterSet) -> Result<f64> {
    let stats = check(snapshot, clusters)?;
    let k = clusters.k;
    let n = snapshot.mpcs.len();
    let mut sizes = vec![0usize; k];
    for &a in &clusters.assignments {
        sizes[a - 1] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::DegenerateClustering("empty cluster".into()));
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = clusters.assignments[i] - 1;
        if sizes[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[clusters.assignments[j] - 1] +=
                    mcd_delay(snapshot.mpcs[i].delay_ns, snapshot.mpcs[j].delay_ns, &stats);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalKOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub criterion: Criterion,
    pub db_orientation: DbOrientation,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for OptimalKOptions {
    fn default() -> Self {
        Self {
            k_min: 4,
            k_max: 10,
            criterion: Criterion::Db,
            db_orientation: DbOrientation::Min,
            seed: 0,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

/// Both validity indices for one candidate count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KCandidate {
    pub k: usize,
    pub db: Option<f64>,
    pub silhouette: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalK {
    pub k: usize,
    pub criterion: Criterion,
    pub candidates: Vec<KCandidate>,
    pub clusters: ClusterSet,
}

/// The K chosen from evaluated candidates. A single candidate is returned
/// as is; otherwise the best finite score wins and ties go to the smaller K.
pub fn select_k(candidates: &[KCandidate], criterion: Criterion, orientation: DbOrientation) -> Option<usize> {
    if candidates.len() == 1 {
        return Some(candidates[0].k);
    }
    let score = |c: &KCandidate| -> Option<f64> {
        match criterion {
            Criterion::Db => c.db.map(|v| match orientation {
                DbOrientation::Min => -v,
                DbOrientation::Max => v,
            }),
            Criterion::Silhouette => c.silhouette,
        }
    };
    let mut best: Option<(usize, f64)> = None;
    for c in candidates {
        if let Some(s) = score(c).filter(|s| s.is_finite()) {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((c.k, s));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// Clusters the snapshot for every K in range and picks one by `criterion`.
/// Ties go to the smaller K.
pub fn optimal_k(snapshot: &Snapshot, opts: &OptimalKOptions) -> Result<OptimalK> {
    if opts.k_min < 1 || opts.k_min > opts.k_max {
        return Err(Error::invalid(format!(
            "invalid cluster range [{}, {}]",
            opts.k_min, opts.k_max
        )));
    }
    if opts.k_max > snapshot.mpcs.len() {
        return Err(Error::invalid(format!(
            "k_max {} exceeds the {} paths of snapshot {}",
            opts.k_max,
            snapshot.mpcs.len(),
            snapshot.index
        )));
    }
    let runs: Vec<(KCandidate, ClusterSet)> = (opts.k_min..=opts.k_max)
        .into_par_iter()
        .map(|k| {
            let c = kpm_cluster(snapshot, k, derive_seed(opts.seed, k as u64), opts.restarts)?;
            let cand = KCandidate {
                k,
                db: db_index(snapshot, &c).ok(),
                silhouette: silhouette_index(snapshot, &c).ok(),
            };
            Ok((cand, c))
        })
        .collect::<Result<_>>()?;

    let candidates: Vec<KCandidate> = runs.iter().map(|(c, _)| *c).collect();
    let chosen = select_k(&candidates, opts.criterion, opts.db_orientation).ok_or_else(|| {
        Error::DegenerateClustering(format!(
            "no valid index for snapshot {} in [{}, {}]",
            snapshot.index, opts.k_min, opts.k_max
        ))
    })?;
    let (cand, clusters) = runs.into_iter().find(|(c, _)| c.k == chosen).expect("chosen K among the runs");
    Ok(OptimalK {
        k: cand.k,
        criterion: opts.criterion,
        candidates,
        clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpc::MultipathComponent;

    fn snap(v: &[f64]) -> Snapshot {
        Snapshot::new(
            0,
            10.0,
            v.iter()
                .map(|&t| MultipathComponent::new(t, -5.0, 0.0))
                .collect(),
        )
    }

    fn set(assign: Vec<usize>, centroids: Vec<f64>) -> ClusterSet {
        ClusterSet {
            snapshot_index: 0,
            k: centroids.len(),
            assignments: assign,
            centroids,
            centroid_powers_db: None,
            objective: 0.0,
        }
    }

    #[test]
    fn singleton_clusters_have_zero_db() {
        let s = snap(&[10.0, 50.0]);
        let c = set(vec![1, 2], vec![10.0, 50.0]);
        assert_eq!(db_index(&s, &c).unwrap(), 0.0);
        assert_eq!(silhouette_index(&s, &c).unwrap(), 0.0);
    }

    #[test]
    fn db_hand_evaluation() {
        let delays = [10.0, 12.0, 80.0, 82.0];
        let s = snap(&delays);
        let c = set(vec![1, 1, 2, 2], vec![11.0, 81.0]);
        // Independent arithmetic: range 72, population std of the delays.
        let mean = 46.0;
        let std = (delays.iter().map(|d: &f64| (d - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
        let unit = std / (72.0 * 72.0);
        let s1 = 1.0 * unit; // mean |x - c| = 1 ns in both clusters
        let d12 = 70.0 * unit;
        let want = (s1 + s1) / d12; // R_1 = R_2
        assert!((db_index(&s, &c).unwrap() - want).abs() < 1e-12);
        assert!((want - 2.0 / 70.0).abs() < 1e-12);
    }

    #[test]
    fn tighter_clusters_lower_db() {
        let wide = snap(&[6.0, 16.0, 76.0, 86.0]);
        let tight = snap(&[9.0, 13.0, 79.0, 83.0]);
        let c = set(vec![1, 1, 2, 2], vec![11.0, 81.0]);
        // Same range normalization is not guaranteed; compare in ns units.
        let dw = db_index(&wide, &c).unwrap();
        let dt = db_index(&tight, &c).unwrap();
        assert!(dt < dw);
    }

    #[test]
    fn separated_clusters_have_silhouette_near_one() {
        let s = snap(&[10.0, 10.5, 11.0, 500.0, 500.5, 501.0]);
        let c = set(vec![1, 1, 1, 2, 2, 2], vec![10.5, 500.5]);
        assert!(silhouette_index(&s, &c).unwrap() > 0.99);
    }

    #[test]
    fn indices_invariant_under_relabeling() {
        let s = snap(&[10.0, 14.0, 40.0, 41.0, 90.0]);
        let a = set(vec![1, 1, 2, 2, 3], vec![12.0, 40.5, 90.0]);
        // Same partition with ids permuted (centroids follow).
        let b = set(vec![3, 3, 1, 1, 2], vec![40.5, 90.0, 12.0]);
        assert!((db_index(&s, &a).unwrap() - db_index(&s, &b).unwrap()).abs() < 1e-12);
        assert!((silhouette_index(&s, &a).unwrap() - silhouette_index(&s, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn coincident_centroids_rejected() {
        let s = snap(&[10.0, 12.0, 14.0]);
        let c = set(vec![1, 2, 1], vec![12.0, 12.0]);
        assert!(matches!(db_index(&s, &c), Err(Error::DegenerateClustering(_))));
        let one = set(vec![1, 1, 1], vec![12.0]);
        assert!(db_index(&s, &one).is_err());
    }

    #[test]
    fn single_candidate_returned_unconditionally() {
        let s = snap(&[10.0, 11.0, 30.0, 31.0, 70.0, 71.0]);
        let opts = OptimalKOptions {
            k_min: 5,
            k_max: 5,
            ..Default::default()
        };
        assert_eq!(optimal_k(&s, &opts).unwrap().k, 5);
    }

    #[test]
    fn random_uniform_delays_have_small_silhouette_on_average() {
        // Monte-Carlo oracle: the mean silhouette of KPM k=2 on uniform delays
        // sits well below the planted-cluster regime (~1).
        use rand::Rng;
        let mut rng = crate::rng::stream(5, 0);
        let mut acc = 0.0;
        let trials = 200;
        for t in 0..trials {
            let d: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..550.0)).collect();
            let s = snap(&d);
            let c = kpm_cluster(&s, 2, t, 5).unwrap();
            acc += silhouette_index(&s, &c).unwrap();
        }
        let mean = acc / trials as f64;
        assert!(mean < 0.7, "{mean}");
    }
}
