//! Distribution fitting and goodness-of-fit utilities.

pub mod bessel;
mod distribution;
mod fit;
pub mod ks;

pub use distribution::{Distribution, Family};
pub use fit::{evaluate_fit, fit_distribution, select_best_fit, DistributionFit, MIN_FIT_SAMPLES};
pub use ks::{ks_critical_value, ks_statistic, ks_two_sample, KS_ALPHA};
