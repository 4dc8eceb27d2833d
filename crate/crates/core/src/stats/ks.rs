//! Kolmogorov-Smirnov statistics.

/// Significance level used for every goodness-of-fit verdict.
pub const KS_ALPHA: f64 = 0.05;

/// One-sample statistic `sup |F_n(x) - F(x)|` for a continuous `cdf`.
/// `sorted` must be ascending.
pub fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let cdf_values: Vec<f64> = sorted.iter().map(|&x| cdf(x)).collect();
    ks_statistic_from_cdf(&cdf_values)
}

/// Statistic from CDF values evaluated at ascending samples.
pub fn ks_statistic_from_cdf(cdf_values: &[f64]) -> f64 {
    let n = cdf_values.len() as f64;
    cdf_values
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let hi = (i + 1) as f64 / n - f;
            let lo = f - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max)
}

/// Two-sample statistic between empirical CDFs. Inputs need not be sorted.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value `sqrt(-ln(alpha/2)/2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_value_at_five_percent() {
        assert!((ks_critical_value(1, 0.05) - 1.358).abs() < 1e-3);
        assert!((ks_critical_value(100, 0.05) - 0.1358).abs() < 1e-4);
    }

    #[test]
    fn uniform_grid_against_uniform_cdf() {
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        let d = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.05).abs() < 1e-12);
    }

    #[test]
    fn two_sample_identical_is_zero() {
        let a = [3.0, 1.0, 2.0, 2.0, 5.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
    }

    #[test]
    fn two_sample_disjoint_is_one() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[3.0, 4.0]), 1.0);
    }
}
