use a2gchan::clustering::OptimalKOptions;
use a2gchan::estimator::EstimatorConfig;
use a2gchan::io::{read_cir_record, read_json, read_record, write_json};
use a2gchan::pipeline::{characterize, cirs_from_record, cluster_record, estimate_record, track_record};
use a2gchan::synthesis::{synthesize_record, ModelParameters, ScenarioConfig};
use a2gchan::tracking::TrackingWeights;
use a2gchan::Error;

fn small_record(seed: u64, n: usize) -> a2gchan::mpc::SnapshotRecord {
    let cfg = ScenarioConfig { n_snapshots: n, rng_seed: seed, ..Default::default() };
    synthesize_record(&ModelParameters::default(), &cfg).unwrap()
}

#[test]
fn record_survives_a_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("record.json");
    let record = small_record(3, 15);
    write_json(&path, &record).unwrap();
    let back = read_record(&path, None).unwrap();
    assert_eq!(back, record);
}

#[test]
fn cir_record_round_trip_and_estimation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cir.json");
    let record = small_record(4, 4);
    let cirs = cirs_from_record(&record, 2.0).unwrap();
    write_json(&path, &cirs).unwrap();
    let back = read_cir_record(&path).unwrap();
    assert_eq!(back.snapshots.len(), 4);
    let estimated = estimate_record(&back, &EstimatorConfig::default()).unwrap();
    assert_eq!(estimated.snapshots.len(), 4);
    for (e, t) in estimated.snapshots.iter().zip(&record.snapshots) {
        assert!(!e.mpcs.is_empty());
        assert_eq!(e.index, t.index);
        let strongest = e.mpcs.iter().map(|m| m.power_db).fold(f64::NEG_INFINITY, f64::max);
        let true_strongest = t.mpcs.iter().map(|m| m.power_db).fold(f64::NEG_INFINITY, f64::max);
        assert!(strongest > true_strongest - 3.0);
    }
}

#[test]
fn synthesized_record_is_clustered_characterized_and_tracked() {
    let record = small_record(5, 30);
    let clustering = cluster_record(&record, &OptimalKOptions { seed: 1, ..Default::default() }, 5.0).unwrap();
    assert_eq!(clustering.snapshots.len() + clustering.skipped.len(), 30);
    assert!(clustering.snapshots.iter().all(|s| (4..=10).contains(&s.k)));
    assert!(clustering.snapshots.iter().filter(|s| s.los.is_some()).count() > 20);

    let report = characterize(&record, &clustering).unwrap();
    for name in ["intra_decay", "ray_unit_area", "cluster_k_factor", "cluster_rms_ds", "delay_offset"] {
        assert!(report.parameter(name).is_some(), "{name} not fitted");
    }
    report.model.validate().unwrap();

    let tracks = track_record(&record, &clustering, &TrackingWeights::FULL_3D, 0.1).unwrap();
    let members: usize = tracks.rows.iter().map(|r| r.n_members).sum();
    let clusters: usize = clustering.snapshots.iter().map(|s| s.clusters.centroids.len()).sum();
    assert_eq!(members, clusters);
    assert!(tracks.rows.iter().all(|r| r.first_snapshot <= r.last_snapshot));
}

#[test]
fn clustering_result_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clusters.json");
    let record = small_record(6, 5);
    let clustering = cluster_record(&record, &OptimalKOptions::default(), 5.0).unwrap();
    write_json(&path, &clustering).unwrap();
    let back: a2gchan::pipeline::ClusteringResult = read_json(&path).unwrap();
    assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&clustering).unwrap());
    assert_eq!(back.snapshots[0].clusters, clustering.snapshots[0].clusters);
}

#[test]
fn mismatched_clustering_is_rejected() {
    let record = small_record(7, 5);
    let clustering = cluster_record(&record, &OptimalKOptions::default(), 5.0).unwrap();
    let mut shorter = record.clone();
    shorter.snapshots.truncate(3);
    assert!(matches!(characterize(&shorter, &clustering), Err(Error::InvalidArgument(_))));
}
