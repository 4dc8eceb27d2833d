use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution as _, Exp, LogNormal, Normal, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};
use statrs::distribution::{self as sd, ContinuousCDF};
use statrs::function::gamma::gamma;

use super::bessel::i0e;
use crate::error::{Error, Result};

/// Distribution families available for fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Weibull,
    Normal,
    Lognormal,
    Laplace,
    Exponential,
    Rayleigh,
    Rician,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Weibull,
        Family::Normal,
        Family::Lognormal,
        Family::Laplace,
        Family::Exponential,
        Family::Rayleigh,
        Family::Rician,
    ];

    /// Families defined only on positive values.
    pub fn positive_support(self) -> bool {
        !matches!(self, Family::Normal | Family::Laplace)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Weibull => "weibull",
            Family::Normal => "normal",
            Family::Lognormal => "lognormal",
            Family::Laplace => "laplace",
            Family::Exponential => "exponential",
            Family::Rayleigh => "rayleigh",
            Family::Rician => "rician",
        };
        f.write_str(s)
    }
}

/// A fully parameterized distribution.
///
/// Weibull uses (scale, shape); log-normal parameters are those of `ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Distribution {
    Weibull { scale: f64, shape: f64 },
    Normal { mean: f64, std: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Laplace { location: f64, scale: f64 },
    Exponential { rate: f64 },
    Rayleigh { sigma: f64 },
    Rician { nu: f64, sigma: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Distribution {
    pub fn family(&self) -> Family {
        match self {
            Distribution::Weibull { .. } => Family::Weibull,
            Distribution::Normal { .. } => Family::Normal,
            Distribution::Lognormal { .. } => Family::Lognormal,
            Distribution::Laplace { .. } => Family::Laplace,
            Distribution::Exponential { .. } => Family::Exponential,
            Distribution::Rayleigh { .. } => Family::Rayleigh,
            Distribution::Rician { .. } => Family::Rician,
        }
    }

    /// The two family parameters in declaration order (second is 0 for
    /// one-parameter families).
    pub fn params(&self) -> [f64; 2] {
        match *self {
            Distribution::Weibull { scale, shape } => [scale, shape],
            Distribution::Normal { mean, std } => [mean, std],
            Distribution::Lognormal { mu, sigma } => [mu, sigma],
            Distribution::Laplace { location, scale } => [location, scale],
            Distribution::Exponential { rate } => [rate, 0.0],
            Distribution::Rayleigh { sigma } => [sigma, 0.0],
            Distribution::Rician { nu, sigma } => [nu, sigma],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Weibull { scale, shape } => {
                positive("weibull scale", scale)?;
                positive("weibull shape", shape)
            }
            Distribution::Normal { mean, std } => {
                if !mean.is_finite() {
                    return Err(Error::invalid("normal mean must be finite"));
                }
                positive("normal std", std)
            }
            Distribution::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::invalid("lognormal mu must be finite"));
                }
                positive("lognormal sigma", sigma)
            }
            Distribution::Laplace { location, scale } => {
                if !location.is_finite() {
                    return Err(Error::invalid("laplace location must be finite"));
                }
                positive("laplace scale", scale)
            }
            Distribution::Exponential { rate } => positive("exponential rate", rate),
            Distribution::Rayleigh { sigma } => positive("rayleigh sigma", sigma),
            Distribution::Rician { nu, sigma } => {
                if !(nu >= 0.0 && nu.is_finite()) {
                    return Err(Error::invalid("rician nu must be non-negative"));
                }
                positive("rician sigma", sigma)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Weibull { scale, shape } => scale * gamma(1.0 + 1.0 / shape),
            Distribution::Normal { mean, .. } => mean,
            Distribution::Lognormal { mu, sigma } => (mu + sigma * sigma / 2.0).exp(),
            Distribution::Laplace { location, .. } => location,
            Distribution::Exponential { rate } => 1.0 / rate,
            Distribution::Rayleigh { sigma } => sigma * (PI / 2.0).sqrt(),
            Distribution::Rician { nu, sigma } => {
                // sigma sqrt(pi/2) L_{1/2}(-nu^2 / 2 sigma^2)
                let x = -nu * nu / (2.0 * sigma * sigma);
                let half = -x / 2.0;
                let l = ((1.0 - x) * i0e(half) - x * super::bessel::i1e(half)) * (x / 2.0 + half).exp();
                sigma * (PI / 2.0).sqrt() * l
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Rician { nu, sigma } => rician_pdf(x, nu, sigma),
            Distribution::Rayleigh { sigma } => {
                if x < 0.0 {
                    0.0
                } else {
                    x / (sigma * sigma) * (-x * x / (2.0 * sigma * sigma)).exp()
                }
            }
            _ => {
                use statrs::distribution::Continuous;
                match *self {
                    Distribution::Weibull { scale, shape } => {
                        sd::Weibull::new(shape, scale).map(|d| d.pdf(x)).unwrap_or(f64::NAN)
                    }
                    Distribution::Normal { mean, std } => {
                        sd::Normal::new(mean, std).map(|d| d.pdf(x)).unwrap_or(f64::NAN)
                    }
                    Distribution::Lognormal { mu, sigma } => {
                        sd::LogNormal::new(mu, sigma).map(|d| d.pdf(x)).unwrap_or(f64::NAN)
                    }
                    Distribution::Laplace { location, scale } => {
                        sd::Laplace::new(location, scale).map(|d| d.pdf(x)).unwrap_or(f64::NAN)
                    }
                    Distribution::Exponential { rate } => {
                        sd::Exp::new(rate).map(|d| d.pdf(x)).unwrap_or(f64::NAN)
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Distribution::Weibull { scale, shape } => {
                sd::Weibull::new(shape, scale).map(|d| d.cdf(x)).unwrap_or(f64::NAN)
            }
            Distribution::Normal { mean, std } => {
                sd::Normal::new(mean, std).map(|d| d.cdf(x)).unwrap_or(f64::NAN)
            }
            Distribution::Lognormal { mu, sigma } => {
                sd::LogNormal::new(mu, sigma).map(|d| d.cdf(x)).unwrap_or(f64::NAN)
            }
            Distribution::Laplace { location, scale } => {
                sd::Laplace::new(location, scale).map(|d| d.cdf(x)).unwrap_or(f64::NAN)
            }
            Distribution::Exponential { rate } => {
                sd::Exp::new(rate).map(|d| d.cdf(x)).unwrap_or(f64::NAN)
            }
            Distribution::Rayleigh { sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-x * x / (2.0 * sigma * sigma)).exp()
                }
            }
            Distribution::Rician { nu, sigma } => {
                rician_cdf_sorted(&[x], nu, sigma).pop().unwrap_or(f64::NAN)
            }
        }
    }

    /// CDF at ascending points; cheaper than repeated [`cdf`](Self::cdf)
    /// for families without a closed form.
    pub fn cdf_sorted(&self, sorted: &[f64]) -> Vec<f64> {
        match *self {
            Distribution::Rician { nu, sigma } => rician_cdf_sorted(sorted, nu, sigma),
            _ => sorted.iter().map(|&x| self.cdf(x)).collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Weibull { scale, shape } => Weibull::new(scale, shape)
                .expect("validated weibull")
                .sample(rng),
            Distribution::Normal { mean, std } => {
                Normal::new(mean, std).expect("validated normal").sample(rng)
            }
            Distribution::Lognormal { mu, sigma } => LogNormal::new(mu, sigma)
                .expect("validated lognormal")
                .sample(rng),
            Distribution::Laplace { location, scale } => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Distribution::Exponential { rate } => {
                Exp::new(rate).expect("validated exponential").sample(rng)
            }
            Distribution::Rayleigh { sigma } => {
                let u: f64 = rng.random();
                sigma * (-2.0 * (1.0 - u).ln()).sqrt()
            }
            Distribution::Rician { nu, sigma } => {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                ((nu + sigma * a).powi(2) + (sigma * b).powi(2)).sqrt()
            }
        }
    }
}

fn rician_pdf(x: f64, nu: f64, sigma: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let s2 = sigma * sigma;
    // exp(-(x^2+nu^2)/2s2) I0(x nu/s2) = exp(-(x-nu)^2/2s2) i0e(x nu/s2)
    x / s2 * (-(x - nu).powi(2) / (2.0 * s2)).exp() * i0e(x * nu / s2)
}

/// Cumulative Simpson integration of the Rician density on a fine grid.
fn rician_cdf_sorted(sorted: &[f64], nu: f64, sigma: f64) -> Vec<f64> {
    const STEPS_PER_SIGMA: f64 = 200.0;
    let h = sigma / STEPS_PER_SIGMA;
    let mut out = Vec::with_capacity(sorted.len());
    let mut acc = 0.0;
    let mut x = 0.0;
    let tail = nu + 40.0 * sigma;
    for &target in sorted {
        if target <= 0.0 {
            out.push(0.0);
            continue;
        }
        if target >= tail {
            out.push(1.0);
            continue;
        }
        while x + h <= target {
            acc += simpson(x, x + h, nu, sigma);
            x += h;
        }
        let partial = if target > x {
            simpson(x, target, nu, sigma)
        } else {
            0.0
        };
        out.push((acc + partial).clamp(0.0, 1.0));
    }
    out
}

fn simpson(a: f64, b: f64, nu: f64, sigma: f64) -> f64 {
    let m = 0.5 * (a + b);
    (b - a) / 6.0 * (rician_pdf(a, nu, sigma) + 4.0 * rician_pdf(m, nu, sigma) + rician_pdf(b, nu, sigma))
}
