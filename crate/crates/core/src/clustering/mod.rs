//! Clustering of a snapshot's paths and selection of the cluster count.

mod kpm;
mod mcd;
mod validity;

use serde::{Deserialize, Serialize};

pub use kpm::{km_cluster, kpm_cluster, kpm_cluster_traced, KpmOutcome};
pub use mcd::{mcd_delay, DelayStats};
pub use validity::{
    db_index, optimal_k, select_k, silhouette_index, Criterion, DbOrientation, KCandidate, OptimalK,
    OptimalKOptions,
};

use crate::mpc::{MultipathComponent, Snapshot};

/// Default margin by which the strongest path must exceed the runner-up to
/// be treated as line of sight and excluded from clustering.
pub const DEFAULT_LOS_MARGIN_DB: f64 = 5.0;
pub const DEFAULT_RESTARTS: usize = 10;

/// Partition of one snapshot's paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub snapshot_index: u64,
    pub k: usize,
    /// Cluster id (1-based) of each path, indexed by `path_id`.
    pub assignments: Vec<usize>,
    /// Centroid delays in ns, ascending; cluster `i` is `centroids[i - 1]`.
    pub centroids: Vec<f64>,
    /// Centroid powers for (delay, power) clusterings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroid_powers_db: Option<Vec<f64>>,
    /// Final objective of the winning run.
    pub objective: f64,
}

impl ClusterSet {
    fn from_run(snapshot_index: u64, run: kpm::Run, keep_power: bool) -> Self {
        let k = run.centroids.len();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            run.centroids[a][0]
                .total_cmp(&run.centroids[b][0])
                .then(run.centroids[a][1].total_cmp(&run.centroids[b][1]))
        });
        let mut relabel = vec![0; k];
        for (new, &old) in order.iter().enumerate() {
            relabel[old] = new + 1;
        }
        Self {
            snapshot_index,
            k,
            assignments: run.assignments.iter().map(|&a| relabel[a]).collect(),
            centroids: order.iter().map(|&i| run.centroids[i][0]).collect(),
            centroid_powers_db: keep_power.then(|| order.iter().map(|&i| run.centroids[i][1]).collect()),
            objective: run.objective,
        }
    }

    /// Members of cluster `id` (1-based).
    pub fn members<'a>(&'a self, snapshot: &'a Snapshot, id: usize) -> Vec<MultipathComponent> {
        snapshot
            .mpcs
            .iter()
            .zip(&self.assignments)
            .filter(|(_, &a)| a == id)
            .map(|(m, _)| *m)
            .collect()
    }

    /// Member lists for clusters `1..=k`.
    pub fn groups(&self, snapshot: &Snapshot) -> Vec<Vec<MultipathComponent>> {
        let mut g = vec![Vec::new(); self.k];
        for (m, &a) in snapshot.mpcs.iter().zip(&self.assignments) {
            g[a - 1].push(*m);
        }
        g
    }
}
