use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Poisson};
use serde::{Deserialize, Serialize};

use super::params::{ModelParameters, PresenceRule, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimator::synthesize_cir_from_mpcs;
use crate::inter::{delay_from_index, occurrence_probability, power_from_delay};
use crate::mpc::{MultipathComponent, RecordMeta, Snapshot, SnapshotRecord};
use crate::rng;
use crate::stats::Distribution;
use crate::tracking::SPEED_OF_LIGHT_M_PER_NS;

const SKELETON_STREAM: u64 = 1;
const SUBPATH_STREAM: u64 = 2;
const PHASE_STREAM: u64 = 3;

/// A cluster present in one snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonCluster {
    /// Cluster index, 1-based.
    pub index: usize,
    /// Identifies the life of this cluster across snapshots.
    pub life: u64,
    pub delay_ns: f64,
    /// Mean power in dB; `None` when the delay lies outside the power
    /// model's domain, in which case the cluster carries no paths.
    pub power_db: Option<f64>,
    pub birth_m: f64,
    pub survival_m: f64,
}

#[derive(Debug, Clone)]
struct Life {
    cluster: SkeletonCluster,
    present: bool,
    paths: Vec<MultipathComponent>,
}

fn max_index(params: &ModelParameters, cfg: &ScenarioConfig) -> Result<usize> {
    if let Some(k) = params.occurrence.last_index() {
        return Ok(k);
    }
    let mut k = params.occurrence.knee.max(1);
    while delay_from_index(k + 1, &params.delay_index_fit)? <= cfg.max_delay_ns {
        k += 1;
    }
    Ok(k)
}

fn draw_count(params: &ModelParameters, cfg: &ScenarioConfig, lo: usize, hi: usize, rng: &mut ChaCha8Rng) -> usize {
    let k = params.cluster_count(cfg.criterion).sample(rng).round();
    (k.max(lo as f64) as usize).min(hi)
}

/// Draws the per-snapshot cluster skeleton. Each cluster index lives for a
/// Weibull survival length, after which it is replaced by a fresh draw at the
/// same index; presence is decided once per life.
pub fn generate_cluster_skeleton(params: &ModelParameters, cfg: &ScenarioConfig) -> Result<Vec<Vec<SkeletonCluster>>> {
    Ok(evolve(params, cfg, false)?.0)
}

/// Sub-paths of one cluster with phases drawn uniformly.
pub fn generate_subpaths<R: Rng + ?Sized>(
    cluster: &SkeletonCluster,
    params: &ModelParameters,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<MultipathComponent>> {
    let Some(p_k) = cluster.power_db else {
        return Ok(Vec::new());
    };
    let tau_k = cluster.delay_ns;
    let rays = Poisson::new(params.rays_per_cluster(cfg.criterion))
        .map_err(|e| Error::invalid(format!("rays per cluster: {e}")))?
        .sample(rng)
        .max(1.0) as usize;
    let a = loop {
        let a = params.intra_decay.sample(rng);
        if a > 0.0 {
            break a;
        }
    };
    let area = params.ray_unit_area.sample(rng);
    let half_width = (area * rays as f64 / a).sqrt() / 2.0;
    let (mut lo, mut hi) = (-tau_k, cfg.max_delay_ns - tau_k);
    if cfg.truncate_offsets {
        lo = lo.max(-half_width);
        hi = hi.min(half_width);
    }
    let Distribution::Laplace { location, scale } = params.delay_offset else {
        return Err(Error::invalid("delay offset model must be Laplace"));
    };
    let b_k = p_k + a * tau_k;
    Ok((0..rays)
        .map(|_| {
            let offset = truncated_laplace(location, scale, lo, hi, rng);
            let delay = tau_k + offset;
            MultipathComponent::new(delay, b_k - a * delay, rng.random::<f64>() * std::f64::consts::TAU)
        })
        .collect())
}

/// Laplace(location, scale) conditioned on `[lo, hi]`, by inverse CDF.
fn truncated_laplace<R: Rng + ?Sized>(location: f64, scale: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let cdf = |x: f64| {
        let z = (x - location) / scale;
        if z < 0.0 {
            0.5 * z.exp()
        } else {
            1.0 - 0.5 * (-z).exp()
        }
    };
    let (u_lo, u_hi) = (cdf(lo), cdf(hi));
    let u = u_lo + (u_hi - u_lo) * rng.random::<f64>();
    let x = if u < 0.5 {
        location + scale * (2.0 * u).ln()
    } else {
        location - scale * (2.0 * (1.0 - u)).ln()
    };
    x.clamp(lo, hi)
}

fn evolve(
    params: &ModelParameters,
    cfg: &ScenarioConfig,
    with_paths: bool,
) -> Result<(Vec<Vec<SkeletonCluster>>, Vec<Vec<MultipathComponent>>)> {
    params.validate()?;
    cfg.validate()?;
    let top = max_index(params, cfg)?;
    let knee = params.occurrence.knee.min(top);
    let mut skel_rng = rng::stream(cfg.rng_seed, SKELETON_STREAM);
    let mut path_rng = rng::stream(cfg.rng_seed, SUBPATH_STREAM);

    let mut next_life = 0u64;
    let mut birth = |k: usize, d: f64, skel_rng: &mut ChaCha8Rng, path_rng: &mut ChaCha8Rng| -> Result<Life> {
        let delay_ns = delay_from_index(k, &params.delay_index_fit)?;
        let power_db = if delay_ns <= cfg.max_delay_ns {
            power_from_delay(delay_ns, &params.power_delay_fit).ok()
        } else {
            None
        };
        let survival_m = params.survival_length.sample(skel_rng);
        let p_oc = occurrence_probability(k, &params.occurrence);
        let present = match cfg.presence {
            PresenceRule::Occurrence => skel_rng.random::<f64>() < p_oc,
            PresenceRule::NormalThinned => {
                let count = draw_count(params, cfg, knee, top, skel_rng);
                let keep = skel_rng.random::<f64>() < p_oc;
                k <= count && keep
            }
        };
        let cluster = SkeletonCluster { index: k, life: next_life, delay_ns, power_db, birth_m: d, survival_m };
        next_life += 1;
        let paths = if present && with_paths {
            generate_subpaths(&cluster, params, cfg, path_rng)?
        } else {
            Vec::new()
        };
        Ok(Life { cluster, present, paths })
    };

    let mut lives: Vec<Life> = Vec::with_capacity(top);
    let mut skeleton = Vec::with_capacity(cfg.n_snapshots);
    let mut paths = Vec::with_capacity(if with_paths { cfg.n_snapshots } else { 0 });
    for i in 0..cfg.n_snapshots {
        let d = cfg.distance(i);
        if i == 0 {
            for k in 1..=top {
                lives.push(birth(k, d, &mut skel_rng, &mut path_rng)?);
            }
        } else {
            for life in lives.iter_mut() {
                if d > life.cluster.birth_m + life.cluster.survival_m {
                    *life = birth(life.cluster.index, d, &mut skel_rng, &mut path_rng)?;
                }
            }
        }
        skeleton.push(lives.iter().filter(|l| l.present).map(|l| l.cluster).collect());
        if with_paths {
            paths.push(lives.iter().filter(|l| l.present).flat_map(|l| l.paths.iter().copied()).collect());
        }
    }
    Ok((skeleton, paths))
}

/// Line-of-sight path for a link of `distance_m`.
pub fn los_component(distance_m: f64, power_db: f64, phase_rad: f64) -> MultipathComponent {
    MultipathComponent::new(distance_m / SPEED_OF_LIGHT_M_PER_NS, power_db, phase_rad)
}

/// Complex taps of the given paths plus an optional LOS path.
pub fn assemble_cir(
    mpcs: &[MultipathComponent],
    los: Option<&MultipathComponent>,
    tap_spacing_ns: f64,
    n_taps: usize,
) -> Result<Vec<Complex64>> {
    let all: Vec<MultipathComponent> = mpcs.iter().chain(los).copied().collect();
    synthesize_cir_from_mpcs(&all, tap_spacing_ns, n_taps)
}

/// A synthesized record and the cluster skeleton behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub record: SnapshotRecord,
    pub skeleton: Vec<Vec<SkeletonCluster>>,
}

/// Synthesizes a full record: cluster skeleton, persistent sub-paths with
/// fresh phases per snapshot, and the LOS path when enabled.
pub fn synthesize(params: &ModelParameters, cfg: &ScenarioConfig) -> Result<Synthesis> {
    let (skeleton, paths) = evolve(params, cfg, true)?;
    let mut phase_rng = rng::stream(cfg.rng_seed, PHASE_STREAM);
    let mut snapshots = Vec::with_capacity(cfg.n_snapshots);
    for (i, (clusters, mut mpcs)) in skeleton.iter().zip(paths).enumerate() {
        for m in mpcs.iter_mut() {
            *m = MultipathComponent::new(m.delay_ns, m.power_db, phase_rng.random::<f64>() * std::f64::consts::TAU);
        }
        let d = cfg.distance(i);
        if cfg.los_present {
            let strongest = clusters
                .iter()
                .filter_map(|c| c.power_db)
                .fold(f64::NEG_INFINITY, f64::max);
            if strongest.is_finite() {
                let los = los_component(d, strongest + cfg.los_excess_db, phase_rng.random::<f64>() * std::f64::consts::TAU);
                if los.delay_ns > cfg.max_delay_ns {
                    return Err(Error::invalid(format!(
                        "LOS delay {} ns at {d} m exceeds the {} ns window",
                        los.delay_ns, cfg.max_delay_ns
                    )));
                }
                mpcs.push(los);
            }
        }
        mpcs.sort_by(|a, b| a.delay_ns.total_cmp(&b.delay_ns));
        snapshots.push(Snapshot::new(i as u64, d, mpcs));
    }
    let meta = RecordMeta { max_delay_ns: cfg.max_delay_ns, ..RecordMeta::default() };
    let mut record = SnapshotRecord::new(meta, snapshots);
    record.seed = Some(cfg.rng_seed);
    Ok(Synthesis { record, skeleton })
}

pub fn synthesize_record(params: &ModelParameters, cfg: &ScenarioConfig) -> Result<SnapshotRecord> {
    synthesize(params, cfg).map(|s| s.record)
}
