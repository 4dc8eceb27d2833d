use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-snapshot delay normalization for the multipath component distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    delta_tau_max: f64,
    tau_std: f64,
    zeta: f64,
}

impl DelayStats {
    pub fn new(delta_tau_max: f64, tau_std: f64, zeta: f64) -> Result<Self> {
        if !(delta_tau_max > 0.0) || !delta_tau_max.is_finite() {
            return Err(Error::DegenerateSnapshot(
                "maximum delay difference is zero".into(),
            ));
        }
        if !(tau_std >= 0.0) {
            return Err(Error::invalid("delay standard deviation must be non-negative"));
        }
        Ok(Self {
            delta_tau_max,
            tau_std,
            zeta,
        })
    }

    /// Range and population standard deviation of `delays`, `zeta = 1`.
    pub fn from_delays(delays: &[f64]) -> Result<Self> {
        Self::from_delays_scaled(delays, 1.0)
    }

    pub fn from_delays_scaled(delays: &[f64], zeta: f64) -> Result<Self> {
        if delays.is_empty() {
            return Err(Error::DegenerateSnapshot("no delays".into()));
        }
        let lo = delays.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = delays.len() as f64;
        let mean = delays.iter().sum::<f64>() / n;
        let var = delays.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
        Self::new(hi - lo, var.sqrt(), zeta)
    }

    pub fn delta_tau_max(&self) -> f64 {
        self.delta_tau_max
    }

    pub fn tau_std(&self) -> f64 {
        self.tau_std
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Distance per nanosecond of delay difference.
    pub fn scale(&self) -> f64 {
        self.zeta * self.tau_std / (self.delta_tau_max * self.delta_tau_max)
    }
}

/// Delay-domain multipath component distance
/// `zeta * |tau_i - tau_j| / dtau_max * tau_std / dtau_max`.
pub fn mcd_delay(tau_i: f64, tau_j: f64, stats: &DelayStats) -> f64 {
    (tau_i - tau_j).abs() * stats.scale()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_evaluated_three_delays() {
        let s = DelayStats::from_delays(&[0.0, 100.0, 200.0]).unwrap();
        // population std of {0, 100, 200} is 81.6497 ns
        assert!((s.tau_std() - 81.64965809277261).abs() < 1e-9);
        let d = mcd_delay(0.0, 100.0, &s);
        assert!((d - 0.5 * 81.64965809277261 / 200.0).abs() < 1e-12);
        assert!((d - 0.2041).abs() < 1e-4);
    }

    #[test]
    fn identical_delays_are_degenerate() {
        assert!(matches!(
            DelayStats::from_delays(&[5.0, 5.0, 5.0]),
            Err(Error::DegenerateSnapshot(_))
        ));
    }

    proptest! {
        #[test]
        fn pseudometric(a in 0.0f64..550.0, b in 0.0f64..550.0, c in 0.0f64..550.0) {
            let s = DelayStats::from_delays(&[0.0, 37.0, 550.0]).unwrap();
            prop_assert_eq!(mcd_delay(a, a, &s), 0.0);
            prop_assert_eq!(mcd_delay(a, b, &s), mcd_delay(b, a, &s));
            prop_assert!(mcd_delay(a, b, &s) >= 0.0);
            if a != b { prop_assert!(mcd_delay(a, b, &s) > 0.0); }
            prop_assert!(mcd_delay(a, c, &s) <= mcd_delay(a, b, &s) + mcd_delay(b, c, &s) + 1e-12);
        }
    }
}
