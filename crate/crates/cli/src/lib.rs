//! Command-line front end for the channel toolchain.

use std::fs::File;
use std::path::{Path, PathBuf};

use a2gchan::clustering::{Criterion, DbOrientation, OptimalKOptions, DEFAULT_LOS_MARGIN_DB, DEFAULT_RESTARTS};
use a2gchan::estimator::EstimatorConfig;
use a2gchan::io::{read_cir_record, read_json, read_record, write_cdl, write_csv, write_json};
use a2gchan::mpc::{DEFAULT_FLOOR_DB, DEFAULT_MAX_PATHS, DEFAULT_TAP_SPACING_NS};
use a2gchan::pipeline::{
    characterize, cirs_from_record, cluster_record, estimate_record, track_record, ClusteringResult,
    TRAJECTORY_CSV_HEADER,
};
use a2gchan::stats::{fit_distribution, select_best_fit, DistributionFit, Family};
use a2gchan::synthesis::{
    cdl_report, cir_link_metrics, synthesize_record, validate_against_targets, whole_link_metrics, ModelParameters,
    PresenceRule, ScenarioConfig, ValidationReport, WholeLinkReport, DEFAULT_LOS_EXCESS_DB, DEFAULT_SEED,
};
use a2gchan::tracking::{TrackingWeights, DEFAULT_LINK_THRESHOLD};
use a2gchan::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_PARSE: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_VALIDATION: u8 = 5;

/// Environment variable holding the log filter (for example `info`).
pub const LOG_ENV: &str = "A2GCHAN_LOG";

const EXIT_CODES_HELP: &str = "\
Exit codes:
  0  success
  2  usage error or invalid argument
  3  malformed or unreadable input, or an output that cannot be written
  4  numerically degenerate input or a failed fit
  5  validation against the reference targets failed

Errors are also written to stderr as one JSON object with the fields
`error`, `message` and `exit_code` (plus `path` and `field` for parse errors).
Log verbosity is read from the A2GCHAN_LOG environment variable.";

#[derive(Debug, Parser)]
#[command(name = "a2gchan", version, about = "Cluster-based air-to-ground multipath channel toolchain", after_help = EXIT_CODES_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate multipath components from a raw CIR file
    Estimate(EstimateArgs),
    /// Cluster the components of every snapshot and select the cluster count
    Cluster(ClusterArgs),
    /// Fit intra- and inter-cluster statistics of a clustered record
    Characterize(CharacterizeArgs),
    /// Track clusters across snapshots
    Track(TrackArgs),
    /// Fit a distribution to a sample file
    Fit(FitArgs),
    /// Synthesize a snapshot record from the statistical model
    Synthesize(SynthesizeArgs),
    /// Generate a CDL table and compare it with the reference table
    Cdl(CdlArgs),
    /// Compare whole-link K-factor and delay spread of a record with the reference targets
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Db,
    Silhouette,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Db => Criterion::Db,
            CriterionArg::Silhouette => Criterion::Silhouette,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrientationArg {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresenceArg {
    Occurrence,
    NormalThinned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Weibull,
    Normal,
    Lognormal,
    Laplace,
    Exponential,
    Rayleigh,
    Rician,
    /// Best KS statistic over every admissible family
    Auto,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Raw CIR file (JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Snapshot record to write (JSON)
    #[arg(long)]
    pub output: PathBuf,
    /// Maximum number of paths per snapshot
    #[arg(long, default_value_t = DEFAULT_MAX_PATHS)]
    pub max_paths: usize,
    /// Paths weaker than this many dB below the strongest are removed
    #[arg(long, default_value_t = DEFAULT_FLOOR_DB, allow_negative_numbers = true)]
    pub prune_floor_db: f64,
    /// Maximum number of SAGE sweeps
    #[arg(long, default_value_t = 50)]
    pub max_iterations: usize,
    /// Delay search grid points per tap
    #[arg(long, default_value_t = 8)]
    pub oversampling: usize,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Snapshot record (JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Clustering result to write (JSON)
    #[arg(long)]
    pub output: PathBuf,
    /// Smallest candidate cluster count
    #[arg(long, default_value_t = 4)]
    pub k_min: usize,
    /// Largest candidate cluster count
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Validity index used to choose the cluster count
    #[arg(long, value_enum, default_value_t = CriterionArg::Db)]
    pub criterion: CriterionArg,
    /// Extreme of the Davies-Bouldin index that is selected
    #[arg(long, value_enum, default_value_t = OrientationArg::Min)]
    pub db_orientation: OrientationArg,
    /// Random restarts per candidate count
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Seed of the centroid initialization
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Strongest path is removed as LOS when it exceeds the next by this many dB
    #[arg(long, default_value_t = DEFAULT_LOS_MARGIN_DB)]
    pub los_margin_db: f64,
}

#[derive(Debug, Args)]
pub struct CharacterizeArgs {
    /// Snapshot record (JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Clustering result of the record (JSON)
    #[arg(long)]
    pub clustering: PathBuf,
    /// Characterization report to write (JSON)
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the fitted model parameters (JSON)
    #[arg(long)]
    pub params_output: Option<PathBuf>,
    /// Also write the fitted parameter table (CSV)
    #[arg(long)]
    pub table_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Snapshot record (JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Clustering result of the record (JSON)
    #[arg(long)]
    pub clustering: PathBuf,
    /// Trajectory report to write (JSON)
    #[arg(long)]
    pub output: PathBuf,
    /// Also write one row per trajectory (CSV)
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Weight of the link-distance difference
    #[arg(long, default_value_t = TrackingWeights::FULL_3D.w_d)]
    pub w_d: f64,
    /// Weight of the power difference
    #[arg(long, default_value_t = TrackingWeights::FULL_3D.w_p)]
    pub w_p: f64,
    /// Weight of the delay difference
    #[arg(long, default_value_t = TrackingWeights::FULL_3D.w_tau)]
    pub w_tau: f64,
    /// Largest weighted distance at which two clusters are linked
    #[arg(long, default_value_t = DEFAULT_LINK_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Samples: a JSON array of numbers, or a CSV file whose first column holds the samples
    #[arg(long)]
    pub input: PathBuf,
    /// Fit result to write (JSON)
    #[arg(long)]
    pub output: PathBuf,
    /// Distribution family
    #[arg(long, value_enum, default_value_t = FamilyArg::Auto)]
    pub family: FamilyArg,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    /// Snapshot record to write (JSON)
    #[arg(long)]
    pub output: PathBuf,
    /// Also write the rendered CIRs (JSON)
    #[arg(long)]
    pub cir_output: Option<PathBuf>,
    /// Model parameters (JSON); the reference values when omitted
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Number of snapshots
    #[arg(long, default_value_t = 1000)]
    pub snapshots: usize,
    /// Random seed, recorded in the output
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Link distance of the first snapshot in m
    #[arg(long, default_value_t = 10.0)]
    pub d_start: f64,
    /// Link distance of the last snapshot in m
    #[arg(long, default_value_t = 50.0)]
    pub d_end: f64,
    /// Omit the LOS path
    #[arg(long)]
    pub no_los: bool,
    /// LOS power above the strongest cluster in dB
    #[arg(long, default_value_t = DEFAULT_LOS_EXCESS_DB, allow_negative_numbers = true)]
    pub los_excess_db: f64,
    /// Parameter set for the cluster count and rays per cluster
    #[arg(long, value_enum, default_value_t = CriterionArg::Db)]
    pub criterion: CriterionArg,
    /// How cluster presence is drawn
    #[arg(long, value_enum, default_value_t = PresenceArg::Occurrence)]
    pub presence: PresenceArg,
    /// Draw sub-path delay offsets without truncation to the cluster width
    #[arg(long)]
    pub untruncated_offsets: bool,
    /// Tap spacing of the rendered CIRs in ns
    #[arg(long, default_value_t = DEFAULT_TAP_SPACING_NS)]
    pub tap_spacing_ns: f64,
}

#[derive(Debug, Args)]
pub struct CdlArgs {
    /// CDL table to write (CSV)
    #[arg(long)]
    pub output: PathBuf,
    /// Model parameters (JSON); the reference values when omitted
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Number of clusters after the LOS row
    #[arg(long, default_value_t = 10)]
    pub clusters: usize,
    /// Also write the comparison with the reference table (JSON)
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Snapshot record (JSON)
    #[arg(long)]
    pub input: PathBuf,
    /// Validation report to write (JSON)
    #[arg(long)]
    pub output: PathBuf,
    /// Measure on CIRs rendered on the tap grid instead of on the components
    #[arg(long)]
    pub tap_domain: bool,
    /// Tap spacing used with --tap-domain, in ns
    #[arg(long, default_value_t = DEFAULT_TAP_SPACING_NS)]
    pub tap_spacing_ns: f64,
    /// Dynamic range kept with --tap-domain, in dB below the peak
    #[arg(long, default_value_t = DEFAULT_FLOOR_DB, allow_negative_numbers = true)]
    pub floor_db: f64,
}

/// Failure of a command, with its exit status.
#[derive(Debug)]
pub enum Failure {
    Module(Error),
    Validation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Module(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Module(Error::Parse { .. } | Error::Io { .. }) => EXIT_PARSE,
            Failure::Module(e) if e.is_numeric() => EXIT_NUMERIC,
            Failure::Module(_) => EXIT_USAGE,
            Failure::Validation(_) => EXIT_VALIDATION,
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> serde_json::Value {
        let code = self.exit_code();
        match self {
            Failure::Module(e) => {
                let mut v = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code });
                if let Error::Parse { path, field, .. } = e {
                    v["path"] = path.clone().into();
                    v["field"] = field.clone().into();
                } else if let Error::Io { path, .. } = e {
                    v["path"] = path.clone().into();
                }
                v
            }
            Failure::Validation(message) => {
                serde_json::json!({ "error": "validation_failed", "message": message, "exit_code": code })
            }
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

pub fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Cluster(a) => cluster(a),
        Command::Characterize(a) => characterize_cmd(a),
        Command::Track(a) => track(a),
        Command::Fit(a) => fit(a),
        Command::Synthesize(a) => synthesize(a),
        Command::Cdl(a) => cdl(a),
        Command::Validate(a) => validate(a),
    }
}

fn params_from(path: Option<&Path>) -> Result<ModelParameters, Error> {
    let p = match path {
        Some(p) => read_json(p)?,
        None => ModelParameters::default(),
    };
    p.validate()?;
    Ok(p)
}

fn estimate(a: EstimateArgs) -> Outcome {
    let cirs = read_cir_record(&a.input)?;
    let cfg = EstimatorConfig {
        max_paths: a.max_paths,
        prune_floor_db: a.prune_floor_db,
        max_iterations: a.max_iterations,
        delay_grid_oversampling: a.oversampling,
        ..Default::default()
    };
    cfg.validate()?;
    let record = estimate_record(&cirs, &cfg)?;
    log::info!("estimated {} snapshots", record.snapshots.len());
    Ok(write_json(&a.output, &record)?)
}

fn cluster(a: ClusterArgs) -> Outcome {
    let record = read_record(&a.input, None)?;
    let opts = OptimalKOptions {
        k_min: a.k_min,
        k_max: a.k_max,
        criterion: a.criterion.into(),
        db_orientation: match a.db_orientation {
            OrientationArg::Min => DbOrientation::Min,
            OrientationArg::Max => DbOrientation::Max,
        },
        seed: a.seed,
        restarts: a.restarts,
    };
    let result = cluster_record(&record, &opts, a.los_margin_db)?;
    for s in &result.skipped {
        log::warn!("snapshot {} skipped: {}", s.snapshot_index, s.reason);
    }
    Ok(write_json(&a.output, &result)?)
}

#[derive(Serialize)]
struct TableRow<'a> {
    name: &'a str,
    family: String,
    param_1: Option<f64>,
    param_2: Option<f64>,
    n: usize,
    ks_statistic: Option<f64>,
    ks_pass: Option<bool>,
}

fn characterize_cmd(a: CharacterizeArgs) -> Outcome {
    let record = read_record(&a.input, None)?;
    let clustering: ClusteringResult = read_json(&a.clustering)?;
    let report = characterize(&record, &clustering)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_json(&a.output, &report)?;
    if let Some(p) = &a.params_output {
        write_json(p, &report.model)?;
    }
    if let Some(p) = &a.table_csv {
        let rows: Vec<TableRow> = report
            .parameters
            .iter()
            .map(|r| TableRow {
                name: &r.name,
                family: r.fit.map_or_else(String::new, |f| f.family().to_string()),
                param_1: r.fit.map(|f| f.params()[0]),
                param_2: r.fit.map(|f| f.params()[1]),
                n: r.n,
                ks_statistic: r.fit.map(|f| f.ks_statistic),
                ks_pass: r.fit.map(|f| f.ks_pass),
            })
            .collect();
        write_csv(p, &rows, &["name", "family", "param_1", "param_2", "n", "ks_statistic", "ks_pass"])?;
    }
    Ok(())
}

fn track(a: TrackArgs) -> Outcome {
    let record = read_record(&a.input, None)?;
    let clustering: ClusteringResult = read_json(&a.clustering)?;
    let weights = TrackingWeights::new(a.w_d, a.w_p, a.w_tau)?;
    let report = track_record(&record, &clustering, &weights, a.threshold)?;
    write_json(&a.output, &report)?;
    if let Some(p) = &a.csv {
        write_csv(p, &report.rows, &TRAJECTORY_CSV_HEADER)?;
    }
    Ok(())
}

fn read_samples(path: &Path) -> Result<Vec<f64>, Error> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        return read_json(path);
    }
    let f = File::open(path).map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
    let mut rdr = csv::Reader::from_reader(f);
    let column = rdr
        .headers()
        .map_err(|e| Error::Parse { path: path.display().to_string(), field: "header".into(), message: e.to_string() })?
        .get(0)
        .unwrap_or("column 1")
        .to_string();
    rdr.records()
        .enumerate()
        .map(|(i, r)| {
            let parse = |message: String| Error::Parse {
                path: path.display().to_string(),
                field: format!("{column} (row {})", i + 1),
                message,
            };
            let r = r.map_err(|e| parse(e.to_string()))?;
            let cell = r.get(0).unwrap_or("").trim();
            cell.parse::<f64>().map_err(|e| parse(format!("`{cell}`: {e}")))
        })
        .collect()
}

fn fit(a: FitArgs) -> Outcome {
    let samples = read_samples(&a.input)?;
    let family = match a.family {
        FamilyArg::Weibull => Some(Family::Weibull),
        FamilyArg::Normal => Some(Family::Normal),
        FamilyArg::Lognormal => Some(Family::Lognormal),
        FamilyArg::Laplace => Some(Family::Laplace),
        FamilyArg::Exponential => Some(Family::Exponential),
        FamilyArg::Rayleigh => Some(Family::Rayleigh),
        FamilyArg::Rician => Some(Family::Rician),
        FamilyArg::Auto => None,
    };
    let result: DistributionFit = match family {
        Some(f) => fit_distribution(&samples, f)?,
        None => select_best_fit(&samples)?,
    };
    Ok(write_json(&a.output, &result)?)
}

fn synthesize(a: SynthesizeArgs) -> Outcome {
    let params = params_from(a.params.as_deref())?;
    let cfg = ScenarioConfig {
        d_start_m: a.d_start,
        d_end_m: a.d_end,
        n_snapshots: a.snapshots,
        los_present: !a.no_los,
        los_excess_db: a.los_excess_db,
        rng_seed: a.seed,
        criterion: a.criterion.into(),
        presence: match a.presence {
            PresenceArg::Occurrence => PresenceRule::Occurrence,
            PresenceArg::NormalThinned => PresenceRule::NormalThinned,
        },
        truncate_offsets: !a.untruncated_offsets,
        tap_spacing_ns: a.tap_spacing_ns,
        ..Default::default()
    };
    let record = synthesize_record(&params, &cfg)?;
    write_json(&a.output, &record)?;
    if let Some(p) = &a.cir_output {
        write_json(p, &cirs_from_record(&record, cfg.tap_spacing_ns)?)?;
    }
    Ok(())
}

fn cdl(a: CdlArgs) -> Outcome {
    let params = params_from(a.params.as_deref())?;
    let report = cdl_report(&params, a.clusters)?;
    if report.diverges_from_reference {
        log::warn!(
            "generated CDL departs from the reference table (max delay difference {:.2} ns, max power difference {:.2} dB)",
            report.max_delay_diff_ns,
            report.max_power_diff_db
        );
    }
    write_cdl(&a.output, &report.entries)?;
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ValidationDocument {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    snapshots: usize,
    tap_domain: bool,
    validation: ValidationReport,
    metrics: WholeLinkReport,
}

fn validate(a: ValidateArgs) -> Outcome {
    let record = read_record(&a.input, None)?;
    let metrics = if a.tap_domain {
        cir_link_metrics(&record, a.tap_spacing_ns, a.floor_db)?
    } else {
        whole_link_metrics(&record)?
    };
    let validation = validate_against_targets(&metrics);
    write_json(
        &a.output,
        &ValidationDocument { seed: record.seed, snapshots: record.snapshots.len(), tap_domain: a.tap_domain, validation, metrics },
    )?;
    if validation.pass {
        Ok(())
    } else {
        Err(Failure::Validation(format!(
            "mean RMS delay spread {:.2} ns (pass: {}), mean K-factor {} dB (pass: {})",
            validation.mean_rms_ds_ns,
            validation.rms_ds_pass,
            validation.mean_k_factor_db.map_or("undefined".into(), |k| format!("{k:.3}")),
            validation.k_factor_pass
        )))
    }
}
