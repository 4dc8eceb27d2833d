use serde::{Deserialize, Serialize};

use crate::clustering::Criterion;
use crate::error::{Error, Result};
use crate::inter::{DoubleExponentialFit, OccurrenceModel};
use crate::mpc::{DEFAULT_MAX_DELAY_NS, DEFAULT_TAP_SPACING_NS};
use crate::stats::{Distribution, Family};

/// LOS power above the strongest cluster's mean power. With the default
/// scenario the mean whole-link K-factor is close to 0.6 dB.
pub const DEFAULT_LOS_EXCESS_DB: f64 = 14.46;
pub const DEFAULT_SEED: u64 = 1;

/// Statistical model of the channel, one entry per fitted quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParameters {
    /// Per-snapshot optimal cluster count under the DB criterion.
    pub cluster_count_db: Distribution,
    pub cluster_count_silhouette: Distribution,
    /// Cluster survival length in m.
    pub survival_length: Distribution,
    pub occurrence: OccurrenceModel,
    /// Mean number of rays per cluster under each criterion.
    pub rays_per_cluster_db: f64,
    pub rays_per_cluster_silhouette: f64,
    /// dB·ns
    pub ray_unit_area: Distribution,
    /// Cluster K-factor in dB.
    pub cluster_k_factor: Distribution,
    /// Cluster RMS delay spread; parameters of its logarithm.
    pub cluster_rms_ds: Distribution,
    /// Intra-cluster power decay in dB/ns.
    pub intra_decay: Distribution,
    /// Sub-path delay offset in ns.
    pub delay_offset: Distribution,
    /// Cluster delay (ns) against cluster index minus one.
    pub delay_index_fit: DoubleExponentialFit,
    /// Cluster power (dB) against cluster delay (ns).
    pub power_delay_fit: DoubleExponentialFit,
}

impl Default for ModelParameters {
    fn default() -> Self {
        Self {
            cluster_count_db: Distribution::Normal { mean: 5.19, std: 1.46 },
            cluster_count_silhouette: Distribution::Normal { mean: 6.61, std: 2.07 },
            survival_length: Distribution::Weibull { scale: 7.11, shape: 1.47 },
            occurrence: OccurrenceModel::default(),
            rays_per_cluster_db: 9.44,
            rays_per_cluster_silhouette: 7.41,
            ray_unit_area: Distribution::Weibull { scale: 25.75, shape: 1.46 },
            cluster_k_factor: Distribution::Normal { mean: -8.68, std: 5.09 },
            cluster_rms_ds: Distribution::Lognormal { mu: 1.87, sigma: 0.88 },
            intra_decay: Distribution::Weibull { scale: 0.55, shape: 1.21 },
            delay_offset: Distribution::Laplace { location: 0.0, scale: 9.243 },
            delay_index_fit: DoubleExponentialFit::reference_delay(),
            power_delay_fit: DoubleExponentialFit::reference_power(),
        }
    }
}

fn expect(name: &str, d: &Distribution, family: Family) -> Result<()> {
    if d.family() != family {
        return Err(Error::invalid(format!(
            "{name} must be {family:?}, got {:?}",
            d.family()
        )));
    }
    d.validate()
}

impl ModelParameters {
    pub fn validate(&self) -> Result<()> {
        expect("cluster_count_db", &self.cluster_count_db, Family::Normal)?;
        expect("cluster_count_silhouette", &self.cluster_count_silhouette, Family::Normal)?;
        expect("survival_length", &self.survival_length, Family::Weibull)?;
        expect("ray_unit_area", &self.ray_unit_area, Family::Weibull)?;
        expect("cluster_k_factor", &self.cluster_k_factor, Family::Normal)?;
        expect("cluster_rms_ds", &self.cluster_rms_ds, Family::Lognormal)?;
        expect("intra_decay", &self.intra_decay, Family::Weibull)?;
        expect("delay_offset", &self.delay_offset, Family::Laplace)?;
        for (name, v) in [
            ("rays_per_cluster_db", self.rays_per_cluster_db),
            ("rays_per_cluster_silhouette", self.rays_per_cluster_silhouette),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        self.occurrence.validate()?;
        self.delay_index_fit.validate()?;
        self.power_delay_fit.validate()
    }

    pub fn cluster_count(&self, criterion: Criterion) -> Distribution {
        match criterion {
            Criterion::Db => self.cluster_count_db,
            Criterion::Silhouette => self.cluster_count_silhouette,
        }
    }

    pub fn rays_per_cluster(&self, criterion: Criterion) -> f64 {
        match criterion {
            Criterion::Db => self.rays_per_cluster_db,
            Criterion::Silhouette => self.rays_per_cluster_silhouette,
        }
    }
}

/// How cluster presence is drawn for each cluster index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceRule {
    /// Each index is present with its occurrence probability.
    #[default]
    Occurrence,
    /// A cluster count is drawn from the Normal count model, and indices up
    /// to it are then kept with their occurrence probability.
    NormalThinned,
}

/// Scenario and generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub d_start_m: f64,
    pub d_end_m: f64,
    pub n_snapshots: usize,
    pub los_present: bool,
    pub los_excess_db: f64,
    pub rng_seed: u64,
    /// Selects the cluster-count and rays-per-cluster parameter set.
    pub criterion: Criterion,
    pub presence: PresenceRule,
    /// Bound sub-path offsets by half the rectangle width.
    pub truncate_offsets: bool,
    pub max_delay_ns: f64,
    pub tap_spacing_ns: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            d_start_m: 10.0,
            d_end_m: 50.0,
            n_snapshots: 1000,
            los_present: true,
            los_excess_db: DEFAULT_LOS_EXCESS_DB,
            rng_seed: DEFAULT_SEED,
            criterion: Criterion::Db,
            presence: PresenceRule::Occurrence,
            truncate_offsets: true,
            max_delay_ns: DEFAULT_MAX_DELAY_NS,
            tap_spacing_ns: DEFAULT_TAP_SPACING_NS,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_start_m > 0.0 && self.d_end_m > self.d_start_m && self.d_end_m.is_finite()) {
            return Err(Error::invalid(format!(
                "need 0 < d_start < d_end, got {} and {}",
                self.d_start_m, self.d_end_m
            )));
        }
        if self.n_snapshots < 1 {
            return Err(Error::invalid("at least one snapshot is required"));
        }
        if !self.los_excess_db.is_finite() {
            return Err(Error::invalid("los_excess_db must be finite"));
        }
        if !(self.max_delay_ns > 0.0 && self.tap_spacing_ns > 0.0) {
            return Err(Error::invalid("delay window and tap spacing must be positive"));
        }
        Ok(())
    }

    /// Link distance of snapshot `i`, uniformly spaced over the range.
    pub fn distance(&self, i: usize) -> f64 {
        if self.n_snapshots == 1 {
            self.d_start_m
        } else {
            self.d_start_m + (self.d_end_m - self.d_start_m) * i as f64 / (self.n_snapshots - 1) as f64
        }
    }

    /// Taps covering `[0, max_delay_ns]`.
    pub fn n_taps(&self) -> usize {
        (self.max_delay_ns / self.tap_spacing_ns).floor() as usize + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ModelParameters::default().validate().unwrap();
        ScenarioConfig::default().validate().unwrap();
        assert_eq!(ScenarioConfig::default().n_taps(), 276);
    }

    #[test]
    fn wrong_family_is_rejected() {
        let mut p = ModelParameters::default();
        p.intra_decay = Distribution::Normal { mean: 0.5, std: 0.1 };
        assert!(p.validate().is_err());
    }

    #[test]
    fn distances_span_the_range() {
        let c = ScenarioConfig { n_snapshots: 5, ..Default::default() };
        let d: Vec<f64> = (0..5).map(|i| c.distance(i)).collect();
        assert_eq!(d, vec![10.0, 20.0, 30.0, 40.0, 50.0]);
        let bad = ScenarioConfig { d_start_m: 50.0, d_end_m: 10.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
