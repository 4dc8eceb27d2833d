//! Stochastic channel generation from the fitted model, whole-link
//! validation metrics and clustered-delay-line tables.

mod cdl;
mod generator;
mod metrics;
mod params;

pub use cdl::{
    cdl_report, compare_with_reference, emit_cdl, read_cdl_csv, reference_cdl, write_cdl_csv, CdlDifference,
    CdlEntry, CdlReport, REFERENCE_CDL_CSV,
};
pub use generator::{
    assemble_cir, generate_cluster_skeleton, generate_subpaths, los_component, synthesize, synthesize_record,
    SkeletonCluster, Synthesis,
};
pub use metrics::{
    cir_link_metrics, snapshot_metrics, validate_against_targets, whole_link_metrics, LinkMetrics, ValidationReport,
    WholeLinkReport, K_FACTOR_TOLERANCE_DB, RMS_DS_TOLERANCE, TARGET_K_FACTOR_DB, TARGET_RMS_DS_NS,
};
pub use params::{ModelParameters, PresenceRule, ScenarioConfig, DEFAULT_LOS_EXCESS_DB, DEFAULT_SEED};
