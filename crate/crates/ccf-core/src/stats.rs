//! Small statistics helpers: moments, Wilson intervals, the normal CDF and
//! least-squares fits.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample mean and (unbiased) standard deviation; `sd = 0` for one value.
pub fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Wilson score interval for `successes` out of `trials` at `z` standard
/// deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Proportion {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }
}

pub fn wilson(successes: u64, trials: u64, z: f64) -> Proportion {
    if trials == 0 {
        return Proportion {
            successes,
            trials,
            estimate: f64::NAN,
            lo: 0.0,
            hi: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    Proportion {
        successes,
        trials,
        estimate: p,
        lo: (centre - half).max(0.0),
        hi: (centre + half).min(1.0),
    }
}

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter("fit needs equally many x and y".into()));
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (*a, *b))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Insufficient("a line fit needs at least two points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Insufficient("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Log-log fit of `value ≈ C·n^slope` over positive points.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<LineFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|(n, v)| *n > 0.0 && *v > 0.0)
        .map(|(n, v)| (libm::log(*n), libm::log(*v)))
        .unzip();
    linear_fit(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-14);
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let p = wilson(30, 100, 1.96);
        assert!(p.lo < 0.3 && p.hi > 0.3);
        // Reference values of the Wilson interval for 30/100 at z = 1.96.
        assert!((p.lo - 0.2189).abs() < 1e-3 && (p.hi - 0.3958).abs() < 1e-3);
        let all = wilson(64, 64, 1.96);
        assert_eq!(all.hi, 1.0);
        assert!(all.lo > 0.9 && all.lo < 1.0);
        assert!(wilson(0, 0, 1.96).estimate.is_nan());
    }

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (6..=12).map(|k| {
            let n = (1u64 << k) as f64;
            (n, 3.0 * n.powi(-2))
        }).collect();
        let f = rate_fit(&pts).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(rate_fit(&pts[..1]).is_err());
    }

    #[test]
    fn noisy_power_law_recovers_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(f64, f64)> = (3..=10).map(|k| {
            let n = (1u64 << k) as f64;
            let z: f64 = rng.sample(StandardNormal);
            (n, 2.0 * n.powf(-1.3) * libm::exp(0.05 * z))
        }).collect();
        let f = rate_fit(&pts).unwrap();
        assert!((f.slope + 1.3).abs() < 0.1);
    }

    #[test]
    fn moments() {
        let (m, sd) = mean_and_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((sd - 1.2909944487358056).abs() < 1e-15);
    }
}
