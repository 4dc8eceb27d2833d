//! Inter-cluster models: cluster delay against index, cluster power against
//! delay, occurrence probability against index, and cluster-count statistics.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterSet;
use crate::error::{Error, Result};
use crate::mpc::Snapshot;
use crate::stats::{fit_distribution, DistributionFit, Family};

/// Lower end of the delay range over which the power model is calibrated.
pub const POWER_DOMAIN_LO_NS: f64 = 25.0;
pub const POWER_DOMAIN_HI_NS: f64 = 550.0;

const MAX_LM_ITERATIONS: usize = 500;
const MIN_FIT_POINTS: usize = 6;

/// `y = a1 * exp(b1 * x) + a2 * exp(b2 * x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleExponentialFit {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    #[serde(default)]
    pub rmse: f64,
}

impl DoubleExponentialFit {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64) -> Self {
        Self { a1, b1, a2, b2, rmse: 0.0 }
    }

    /// Cluster delay (ns) against `k - 1`.
    pub fn reference_delay() -> Self {
        Self::new(29.38, 0.183, 0.0113, 1.106)
    }

    /// Cluster power (dB) against delay (ns).
    pub fn reference_power() -> Self {
        Self::new(100.9, -0.07998, -23.3, 0.00015)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a1 * (self.b1 * x).exp() + self.a2 * (self.b2 * x).exp()
    }

    fn coefficients(&self) -> [f64; 4] {
        [self.a1, self.b1, self.a2, self.b2]
    }

    fn from_vector(p: &Vector4<f64>, rmse: f64) -> Self {
        Self { a1: p[0], b1: p[1], a2: p[2], b2: p[3], rmse }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coefficients().iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid("double-exponential coefficients must be finite"))
        }
    }
}

/// Delay in ns of the `k`-th cluster (1-based).
pub fn delay_from_index(k: usize, fit: &DoubleExponentialFit) -> Result<f64> {
    if k < 1 {
        return Err(Error::invalid("cluster index starts at 1"));
    }
    Ok(fit.eval((k - 1) as f64))
}

/// Cluster power in dB at delay `tau_ns`, defined on the calibrated range only.
pub fn power_from_delay(tau_ns: f64, fit: &DoubleExponentialFit) -> Result<f64> {
    power_from_delay_in(tau_ns, fit, POWER_DOMAIN_LO_NS, POWER_DOMAIN_HI_NS)
}

pub fn power_from_delay_in(tau_ns: f64, fit: &DoubleExponentialFit, lo: f64, hi: f64) -> Result<f64> {
    if !(lo..=hi).contains(&tau_ns) {
        return Err(Error::Domain {
            what: "cluster delay for the power model".into(),
            value: tau_ns,
            lo,
            hi,
        });
    }
    Ok(fit.eval(tau_ns))
}

fn sse(p: &Vector4<f64>, xs: &[f64], ys: &[f64]) -> f64 {
    let f = DoubleExponentialFit::from_vector(p, 0.0);
    xs.iter().zip(ys).map(|(&x, &y)| (y - f.eval(x)).powi(2)).sum()
}

/// Damped Gauss-Newton (Levenberg-Marquardt) least squares from `init`.
pub fn fit_double_exponential(
    xs: &[f64],
    ys: &[f64],
    init: &DoubleExponentialFit,
) -> Result<DoubleExponentialFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid(format!("{} abscissae but {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::invalid(format!(
            "need at least {MIN_FIT_POINTS} points, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("fit data must be finite"));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("abscissae must be distinct"));
    }
    init.validate()?;

    let n = xs.len() as f64;
    let mut p = Vector4::from(init.coefficients());
    let mut cost = sse(&p, xs, ys);
    let mut lambda = 1e-3;
    for iteration in 1..=MAX_LM_ITERATIONS {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for (&x, &y) in xs.iter().zip(ys) {
            let e1 = (p[1] * x).exp();
            let e2 = (p[3] * x).exp();
            let j = Vector4::new(e1, p[0] * x * e1, e2, p[2] * x * e2);
            let r = y - (p[0] * e1 + p[2] * e2);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        if jtr.amax() <= 1e-14 * (1.0 + cost) || cost == 0.0 {
            return Ok(DoubleExponentialFit::from_vector(&p, (cost / n).sqrt()));
        }
        loop {
            let mut damped = jtj;
            for i in 0..4 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let step = damped
                .cholesky()
                .map(|c| c.solve(&jtr))
                .or_else(|| damped.lu().solve(&jtr));
            let accepted = step.and_then(|delta| {
                let candidate = p + delta;
                let c = sse(&candidate, xs, ys);
                (c.is_finite() && c < cost).then_some((candidate, c, delta))
            });
            match accepted {
                Some((candidate, c, delta)) => {
                    let rel_drop = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    let rel_step = delta.amax() / (p.amax() + 1e-12);
                    p = candidate;
                    cost = c;
                    lambda = (lambda / 10.0).max(1e-15);
                    if rel_drop < 1e-15 || rel_step < 1e-14 {
                        return Ok(DoubleExponentialFit::from_vector(&p, (cost / n).sqrt()));
                    }
                    break;
                }
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        // No damping yields a decrease: a stationary point to working precision.
                        return Ok(DoubleExponentialFit::from_vector(&p, (cost / n).sqrt()));
                    }
                }
            }
        }
        if iteration == MAX_LM_ITERATIONS {
            break;
        }
    }
    Err(Error::FitFailure {
        iterations: MAX_LM_ITERATIONS,
        rmse: (cost / n).sqrt(),
        best: [p[0], p[1], p[2], p[3]],
    })
}

/// Piecewise-linear occurrence probability of the `k`-th cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceModel {
    pub slope: f64,
    pub intercept: f64,
    /// Clusters up to this index are always present.
    pub knee: usize,
}

impl Default for OccurrenceModel {
    fn default() -> Self {
        Self { slope: -0.115, intercept: 1.361, knee: 4 }
    }
}

impl OccurrenceModel {
    /// Index at which the line reaches zero, if it decreases.
    pub fn zero_crossing(&self) -> Option<f64> {
        (self.slope < 0.0).then(|| -self.intercept / self.slope)
    }

    /// Largest index with non-zero occurrence probability, if finite.
    pub fn last_index(&self) -> Option<usize> {
        let z = self.zero_crossing()?;
        let mut k = self.knee.max(z.floor() as usize + 1);
        while k > self.knee && occurrence_probability(k, self) <= 0.0 {
            k -= 1;
        }
        Some(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.slope.is_finite() || !self.intercept.is_finite() {
            return Err(Error::invalid("occurrence line must be finite"));
        }
        Ok(())
    }
}

/// Probability that cluster `k` (1-based) is present; clamped to [0, 1].
pub fn occurrence_probability(k: usize, m: &OccurrenceModel) -> f64 {
    if k <= m.knee {
        1.0
    } else {
        (m.slope * k as f64 + m.intercept).clamp(0.0, 1.0)
    }
}

/// Least-squares occurrence model from presence counts.
///
/// `present[i]` is the number of snapshots, out of `total`, in which cluster
/// `i + 1` exists. The line is fitted over indices past the knee whose
/// empirical probability lies strictly between 0 and 1.
pub fn fit_occurrence(present: &[u64], total: u64) -> Result<OccurrenceModel> {
    if total == 0 {
        return Err(Error::invalid("no snapshots"));
    }
    if present.len() < 10 {
        return Err(Error::invalid(format!(
            "presence counts must span indices 1..10, got {}",
            present.len()
        )));
    }
    if let Some(&c) = present.iter().find(|&&c| c > total) {
        return Err(Error::invalid(format!("presence count {c} exceeds {total} snapshots")));
    }
    let prob: Vec<f64> = present.iter().map(|&c| c as f64 / total as f64).collect();
    let knee = prob.iter().rposition(|&p| p >= 1.0).map_or(0, |i| i + 1);
    let pts: Vec<(f64, f64)> = prob
        .iter()
        .enumerate()
        .skip(knee)
        .filter(|(_, &p)| p > 0.0 && p < 1.0)
        .map(|(i, &p)| ((i + 1) as f64, p))
        .collect();
    if pts.is_empty() && knee == present.len() {
        return Ok(OccurrenceModel { slope: 0.0, intercept: 1.0, knee });
    }
    if pts.len() < 2 {
        return Err(Error::UndefinedSlope(format!(
            "{} index(es) with fractional presence past the knee",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(OccurrenceModel { slope, intercept: my - slope * mx, knee })
}

/// Normal model of the per-snapshot optimal cluster count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterCountStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Set when every snapshot chose the same count.
    pub degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<DistributionFit>,
}

pub fn cluster_count_stats(counts: &[usize]) -> Result<ClusterCountStats> {
    let xs: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
    if xs.len() < crate::stats::MIN_FIT_SAMPLES {
        return Err(Error::invalid(format!(
            "need at least {} snapshots, got {}",
            crate::stats::MIN_FIT_SAMPLES,
            xs.len()
        )));
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Ok(ClusterCountStats { n: xs.len(), mean: xs[0], std: 0.0, degenerate: true, fit: None });
    }
    let fit = fit_distribution(&xs, Family::Normal)?;
    let [mean, std] = fit.params();
    Ok(ClusterCountStats { n: xs.len(), mean, std, degenerate: false, fit: Some(fit) })
}

/// Unweighted mean delay and mean dB power of each cluster, in cluster order.
pub fn cluster_means(clusters: &ClusterSet, snapshot: &Snapshot) -> Vec<(usize, f64, f64)> {
    clusters
        .groups(snapshot)
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(i, g)| {
            let n = g.len() as f64;
            (
                i + 1,
                g.iter().map(|m| m.delay_ns).sum::<f64>() / n,
                g.iter().map(|m| m.power_db).sum::<f64>() / n,
            )
        })
        .collect()
}
