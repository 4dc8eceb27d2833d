use serde::{Deserialize, Serialize};

use super::bessel::bessel_ratio;
use super::distribution::{Distribution, Family};
use super::ks::{ks_critical_value, ks_statistic_from_cdf, KS_ALPHA};
use crate::error::{Error, Result};

/// Minimum sample count accepted by the fitters.
pub const MIN_FIT_SAMPLES: usize = 8;

/// A maximum-likelihood fit with its KS verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionFit {
    #[serde(flatten)]
    pub distribution: Distribution,
    pub n: usize,
    pub ks_statistic: f64,
    /// KS acceptance at the 0.05 level, asymptotic critical value.
    pub ks_pass: bool,
}

impl DistributionFit {
    pub fn family(&self) -> Family {
        self.distribution.family()
    }

    pub fn params(&self) -> [f64; 2] {
        self.distribution.params()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn std_pop(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn check_samples(samples: &[f64], family: Family) -> Result<Vec<f64>> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples contain non-finite values"));
    }
    if family.positive_support() && samples.iter().any(|&x| x <= 0.0) {
        return Err(Error::invalid(format!(
            "{family} fit requires strictly positive samples"
        )));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateSample("all samples are equal".into()));
    }
    Ok(sorted)
}

/// Weibull MLE: Newton iteration on the shape profile equation
/// `1/k + mean(ln x) - sum(x^k ln x) / sum(x^k) = 0`, safeguarded by bisection.
fn fit_weibull(sorted: &[f64]) -> Result<Distribution> {
    // Scale by the maximum so x^k stays finite for large shapes.
    let xmax = sorted[sorted.len() - 1];
    let xs: Vec<f64> = sorted.iter().map(|x| x / xmax).collect();
    let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let mean_log = mean(&logs);

    let g = |k: f64| -> (f64, f64) {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (x, l) in xs.iter().zip(&logs) {
            let xk = x.powf(k);
            s0 += xk;
            s1 += xk * l;
            s2 += xk * l * l;
        }
        let val = 1.0 / k + mean_log - s1 / s0;
        let der = -1.0 / (k * k) - (s2 * s0 - s1 * s1) / (s0 * s0);
        (val, der)
    };

    // g is decreasing in k; bracket the root.
    let (mut lo, mut hi) = (1e-3, 1.0);
    while g(hi).0 > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::DegenerateSample(
                "weibull shape diverges (near-constant samples)".into(),
            ));
        }
    }
    let mut k = 1.2 / std_pop(&logs).max(1e-12);
    if !(k > lo && k < hi) {
        k = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let (v, d) = g(k);
        if v > 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let mut next = k - v / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - k).abs() <= 1e-13 * k {
            k = next;
            break;
        }
        k = next;
    }
    let scale = (xs.iter().map(|x| x.powf(k)).sum::<f64>() / xs.len() as f64).powf(1.0 / k) * xmax;
    Ok(Distribution::Weibull { scale, shape: k })
}

/// Rician MLE by the fixed-point form of the likelihood equations:
/// `nu = mean(x R(x nu / s2))`, `s2 = (mean(x^2) - nu^2) / 2`, `R = I1/I0`.
fn fit_rician(sorted: &[f64]) -> Result<Distribution> {
    let m2 = mean(&sorted.iter().map(|x| x * x).collect::<Vec<_>>());
    let m4 = mean(&sorted.iter().map(|x| x.powi(4)).collect::<Vec<_>>());
    // Moment start.
    let nu4 = 2.0 * m2 * m2 - m4;
    let mut nu = if nu4 > 0.0 { nu4.sqrt().sqrt() } else { 0.0 };
    let mut s2 = ((m2 - nu * nu) / 2.0).max(m2 * 1e-6);
    for _ in 0..2000 {
        let next_nu = mean(
            &sorted
                .iter()
                .map(|&x| x * bessel_ratio(x * nu / s2))
                .collect::<Vec<_>>(),
        );
        let next_s2 = ((m2 - next_nu * next_nu) / 2.0).max(m2 * 1e-12);
        let done = (next_nu - nu).abs() <= 1e-10 * (nu + s2.sqrt())
            && (next_s2 - s2).abs() <= 1e-10 * s2;
        nu = next_nu;
        s2 = next_s2;
        if done {
            break;
        }
    }
    Ok(Distribution::Rician {
        nu: nu.max(0.0),
        sigma: s2.sqrt(),
    })
}

fn mle(sorted: &[f64], family: Family) -> Result<Distribution> {
    let d = match family {
        Family::Normal => Distribution::Normal {
            mean: mean(sorted),
            std: std_pop(sorted),
        },
        Family::Lognormal => {
            let logs: Vec<f64> = sorted.iter().map(|x| x.ln()).collect();
            Distribution::Lognormal {
                mu: mean(&logs),
                sigma: std_pop(&logs),
            }
        }
        Family::Laplace => {
            let location = median(sorted);
            let scale = mean(&sorted.iter().map(|x| (x - location).abs()).collect::<Vec<_>>());
            Distribution::Laplace { location, scale }
        }
        Family::Exponential => Distribution::Exponential {
            rate: 1.0 / mean(sorted),
        },
        Family::Rayleigh => Distribution::Rayleigh {
            sigma: (sorted.iter().map(|x| x * x).sum::<f64>() / (2.0 * sorted.len() as f64)).sqrt(),
        },
        Family::Weibull => fit_weibull(sorted)?,
        Family::Rician => fit_rician(sorted)?,
    };
    d.validate()
        .map_err(|e| Error::DegenerateSample(format!("{family} fit: {e}")))?;
    Ok(d)
}

/// Fits `family` by maximum likelihood and scores it with the KS statistic.
pub fn fit_distribution(samples: &[f64], family: Family) -> Result<DistributionFit> {
    let sorted = check_samples(samples, family)?;
    let distribution = mle(&sorted, family)?;
    Ok(score(&sorted, distribution))
}

/// KS verdict of an already parameterized distribution against samples.
pub fn evaluate_fit(samples: &[f64], distribution: Distribution) -> Result<DistributionFit> {
    distribution.validate()?;
    if samples.is_empty() {
        return Err(Error::DegenerateSample("no samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(score(&sorted, distribution))
}

fn score(sorted: &[f64], distribution: Distribution) -> DistributionFit {
    let ks = ks_statistic_from_cdf(&distribution.cdf_sorted(sorted));
    DistributionFit {
        distribution,
        n: sorted.len(),
        ks_statistic: ks,
        ks_pass: ks <= ks_critical_value(sorted.len(), KS_ALPHA),
    }
}

/// Fits every family whose support admits the samples and returns the one
/// with the smallest KS statistic.
pub fn select_best_fit(samples: &[f64]) -> Result<DistributionFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mut best: Option<DistributionFit> = None;
    let mut last_err = None;
    for family in Family::ALL {
        match fit_distribution(samples, family) {
            Ok(f) => {
                if best.is_none_or(|b| f.ks_statistic < b.ks_statistic) {
                    best = Some(f);
                }
            }
            Err(Error::InvalidArgument(_)) if family.positive_support() => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::DegenerateSample("no family fits".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draw(d: Distribution, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn normal_refit_of_cluster_k_factor_model() {
        let xs = draw(Distribution::Normal { mean: -8.68, std: 5.09 }, 10_000, 11);
        let f = fit_distribution(&xs, Family::Normal).unwrap();
        let [m, s] = f.params();
        assert!(rel(m, -8.68) < 0.05 && rel(s, 5.09) < 0.05);
        assert!(f.ks_pass);
    }

    #[test]
    fn weibull_refit_of_intra_decay_model() {
        let xs = draw(Distribution::Weibull { scale: 0.55, shape: 1.21 }, 10_000, 12);
        let f = fit_distribution(&xs, Family::Weibull).unwrap();
        let [scale, shape] = f.params();
        assert!(rel(scale, 0.55) < 0.05, "{scale}");
        assert!(rel(shape, 1.21) < 0.05, "{shape}");
        assert!(f.ks_pass);
    }

    #[test]
    fn lognormal_refit_of_cluster_delay_spread_model() {
        let xs = draw(Distribution::Lognormal { mu: 1.87, sigma: 0.88 }, 10_000, 13);
        let f = fit_distribution(&xs, Family::Lognormal).unwrap();
        let [mu, sigma] = f.params();
        assert!(rel(mu, 1.87) < 0.05 && rel(sigma, 0.88) < 0.05);
    }

    #[test]
    fn rician_refit() {
        let xs = draw(Distribution::Rician { nu: 3.0, sigma: 1.0 }, 10_000, 14);
        let f = fit_distribution(&xs, Family::Rician).unwrap();
        let [nu, sigma] = f.params();
        assert!(rel(nu, 3.0) < 0.05 && rel(sigma, 1.0) < 0.05, "{nu} {sigma}");
        assert!(f.ks_pass);
    }

    #[test]
    fn one_parameter_families() {
        let xs = draw(Distribution::Exponential { rate: 0.5 }, 10_000, 15);
        assert!(rel(fit_distribution(&xs, Family::Exponential).unwrap().params()[0], 0.5) < 0.05);
        let xs = draw(Distribution::Rayleigh { sigma: 2.0 }, 10_000, 16);
        assert!(rel(fit_distribution(&xs, Family::Rayleigh).unwrap().params()[0], 2.0) < 0.05);
    }

    #[test]
    fn best_fit_identifies_family() {
        let xs = draw(Distribution::Laplace { location: 0.0, scale: 9.243 }, 5_000, 17);
        assert_eq!(select_best_fit(&xs).unwrap().family(), Family::Laplace);
        let xs = draw(Distribution::Normal { mean: 0.0, std: 3.0 }, 5_000, 18);
        assert_eq!(select_best_fit(&xs).unwrap().family(), Family::Normal);
    }

    #[test]
    fn precondition_errors() {
        assert!(matches!(
            select_best_fit(&[1.0; 7]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            fit_distribution(&[2.0; 10], Family::Normal),
            Err(Error::DegenerateSample(_))
        ));
        let mut xs = vec![1.0; 10];
        xs[0] = -1.0;
        assert!(matches!(
            fit_distribution(&xs, Family::Weibull),
            Err(Error::InvalidArgument(_))
        ));
    }
}
