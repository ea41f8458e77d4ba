//! Small statistics helpers for the Monte Carlo studies.

use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided Wilson score interval for a binomial proportion.
pub fn wilson(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = z * z;
    let den = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / den;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `z` quantile for a two-sided interval at `level` (e.g. 0.95 -> 1.96).
pub fn two_sided_z(level: f64) -> f64 {
    std_normal().inverse_cdf(0.5 + 0.5 * level)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// `P(N(0,1) > x)`.
pub fn normal_sf(x: f64) -> f64 {
    std_normal().sf(x)
}

/// `log P(N(0,1) > x)`, accurate far into the tail.
pub fn log_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        return normal_sf(x).ln();
    }
    // Mills ratio asymptotics
    let x2 = x * x;
    -0.5 * x2 - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Mean and unbiased variance.
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        assert!((lo - 0.2189).abs() < 1e-3 && (hi - 0.3958).abs() < 1e-3);
        let (lo, hi) = wilson(0, 50, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        assert!((two_sided_z(0.95) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn tail_is_continuous_at_switch() {
        let a = log_normal_sf(29.999999);
        let b = log_normal_sf(30.0);
        assert!((a - b).abs() < 1e-4 * a.abs());
        assert!((log_normal_sf(0.0) - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn fit_and_median() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [3.0, 5.0, 7.0];
        assert_eq!(linear_fit(&xs, &ys), Some((2.0, 1.0)));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(mean_var(&[1.0, 3.0]), (2.0, 2.0));
    }
}
