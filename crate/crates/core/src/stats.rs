//! Small statistics helpers for Monte Carlo estimates.

use serde::Serialize;

pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64, z: f64) -> Estimate {
    if n == 0 {
        return Estimate { value: f64::NAN, ci_low: 0.0, ci_high: 1.0, n };
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let ci_low = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let ci_high = if k == n { 1.0 } else { (centre + half).min(1.0) };
    Estimate { value: p, ci_low, ci_high, n }
}

/// Binomial standard error of a frequency.
pub fn binomial_sigma(k: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = k as f64 / n as f64;
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Mean with a normal-approximation interval.
pub fn mean_ci(xs: &[f64], z: f64) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { value: f64::NAN, ci_low: f64::NAN, ci_high: f64::NAN, n: 0 };
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let half = z * (var / n as f64).sqrt();
    Estimate { value: m, ci_low: m - half, ci_high: m + half, n: n as u64 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_point_estimate() {
        let e = wilson(30, 100, Z95);
        assert!(e.ci_low < 0.3 && 0.3 < e.ci_high);
        let e = wilson(0, 100, Z95);
        assert_eq!(e.ci_low, 0.0);
        assert!(e.ci_high > 0.0 && e.ci_high < 0.05);
        let e = wilson(100, 100, Z95);
        assert!((e.ci_high - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_ci_constant() {
        let e = mean_ci(&[2.0; 10], Z95);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.ci_low, 2.0);
    }
}
