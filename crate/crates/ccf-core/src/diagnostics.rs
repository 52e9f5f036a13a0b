//! Monitored functionals: the blow-up quantity, the logarithmic Lyapunov
//! functional, the transport pairing and its commutator constant, and the
//! strong-noise drift condition.

use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{PathRecord, PathStatus};
use crate::noise::{eval_strong_alpha, TimeProfile};
use crate::spectral::{
    bessel, derivative, hilbert, product, sobolev_inner, sobolev_norm, Field,
    SpectralGrid,
};
use crate::stats::{linear_fit, mean_and_sd};
use alloc::sync::Arc;

/// `‖u_x‖∞ + ‖Hu_x‖∞`.
pub fn blowup_quantity(u: &Field) -> f64 {
    let ux = derivative(u);
    ux.max_abs() + hilbert(&ux).max_abs()
}

/// `log(1 + ‖u‖²_{H^{s−1}})`.
pub fn lyapunov_value(u: &Field, s: f64) -> f64 {
    let n = sobolev_norm(u, s - 1.0);
    libm::log1p(n * n)
}

/// `((Hu)u_x, u)_{H^σ}` with the dealiased product.
pub fn transport_pairing(u: &Field, sigma: f64) -> f64 {
    let p = product(&hilbert(u), &derivative(u));
    sobolev_inner(&p, u, sigma)
}

/// `((Hu) D^σu_x, D^σu)_{L²} + ½∫(Hu)_x (D^σu)²`, which integration by
/// parts makes zero. Products are taken without dealiasing so the identity
/// is exact for fields resolved on a third of the band.
pub fn transport_antisymmetry_residual(u: &Field, sigma: f64) -> f64 {
    let g = u.grid();
    let du = bessel(u, sigma);
    let hu = hilbert(u);
    let dux = derivative(&du);
    let hux = derivative(&hu);
    let l = g.period();
    let n = g.len() as f64;
    let (a, b, c, d) = (hu.samples(), dux.samples(), du.samples(), hux.samples());
    let mut left = 0.0;
    let mut right = 0.0;
    for j in 0..g.len() {
        left += a[j] * b[j] * c[j];
        right += d[j] * c[j] * c[j];
    }
    (left + 0.5 * right) * l / n
}

/// Random zero-mean field with modes `1..=band`, amplitudes decaying like
/// `k^{-decay}` and uniform random phases.
pub fn random_band_limited<R: Rng + ?Sized>(
    grid: &Arc<SpectralGrid>,
    band: usize,
    decay: f64,
    rng: &mut R,
) -> Field {
    let mut coeffs = alloc::vec![Complex64::new(0.0, 0.0); grid.modes()];
    for (k, c) in coeffs.iter_mut().enumerate().take(band.min(grid.modes() - 2) + 1).skip(1) {
        let amp: f64 = rng.random::<f64>() * libm::pow(k as f64, -decay);
        let ph: f64 = rng.random::<f64>() * 2.0 * core::f64::consts::PI;
        *c = Complex64::new(amp * libm::cos(ph), amp * libm::sin(ph));
    }
    Field::from_coefficients(grid, coeffs).expect("finite coefficients")
}

/// Running maximum of `|((Hu)u_x, u)_{H^{s−1}}| / (B(u)‖u‖²_{H^{s−1}})` over
/// random fields resolved below the dealiasing cutoff.
pub fn estimate_commutator_constant<R: Rng + ?Sized>(
    grid: &Arc<SpectralGrid>,
    samples: usize,
    s: f64,
    rng: &mut R,
) -> Result<f64> {
    if samples < 100 {
        return Err(Error::Insufficient("commutator estimate needs ≥ 100 samples".into()));
    }
    let band_max = grid.dealias_cutoff() / 2;
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let band = 1 + rng.random_range(0..band_max);
        let decay = 1.0 + 3.0 * rng.random::<f64>();
        let amp = libm::exp(4.0 * (rng.random::<f64>() - 0.5));
        let u = random_band_limited(grid, band, decay, rng).scale(amp);
        let b = blowup_quantity(&u);
        if b < 1e-8 {
            continue;
        }
        let n = sobolev_norm(&u, s - 1.0);
        let ratio = transport_pairing(&u, s - 1.0).abs() / (b * n * n);
        best = best.max(ratio);
    }
    Ok(best)
}

/// Constants of the strong-noise drift condition with `𝔊 = log(1+·)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSpec {
    pub k1: f64,
    pub k2: f64,
    pub q_hat: f64,
    pub s: f64,
}

/// Both sides of the drift condition at `(t, u)` for
/// `α = q(t)(1+B)^θ u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCondition {
    /// `𝔊'(x)M(t) + 2𝔊''(x)|(α,u)|²`
    pub lhs: f64,
    /// `{𝔊'(x)|(α,u)|}² / (1 + 𝔊(x))`, the factor multiplying `K₂`
    pub k2_factor: f64,
}

impl DriftCondition {
    /// `LHS − (K₁ − K₂·factor)`; negative certifies the condition.
    pub fn residual(&self, k1: f64, k2: f64) -> f64 {
        self.lhs - (k1 - k2 * self.k2_factor)
    }
}

pub fn drift_condition(u: &Field, t: f64, q: &TimeProfile, theta: f64, q_hat: f64, s: f64) -> DriftCondition {
    let x = {
        let n = sobolev_norm(u, s - 1.0);
        n * n
    };
    let g = libm::log1p(x);
    let g1 = 1.0 / (1.0 + x);
    let g2 = -g1 * g1;
    let alpha = eval_strong_alpha(q, theta, t, u);
    let pair = sobolev_inner(&alpha, u, s - 1.0).abs();
    let an = sobolev_norm(&alpha, s - 1.0);
    let m = 2.0 * q_hat * blowup_quantity(u) * x + an * an;
    let lhs = g1 * m + 2.0 * g2 * pair * pair;
    let k2_factor = (g1 * pair) * (g1 * pair) / (1.0 + g);
    DriftCondition { lhs, k2_factor }
}

/// `LHS − RHS` of the drift condition.
pub fn lyapunov_drift_residual(u: &Field, t: f64, q: &TimeProfile, theta: f64, spec: &LyapunovSpec) -> f64 {
    drift_condition(u, t, q, theta, spec.q_hat, spec.s).residual(spec.k1, spec.k2)
}

/// Smallest `K₁` for which the condition holds on every sample.
pub fn fit_k1(conditions: &[DriftCondition], k2: f64) -> f64 {
    conditions
        .iter()
        .map(|c| c.lhs + k2 * c.k2_factor)
        .fold(0.0, f64::max)
}

/// Outcome of comparing `E 𝔊(‖u(t)‖²_{H^{s−1}})` with `𝔊(‖u₀‖²) + K₁t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub bound: Vec<f64>,
    /// Least-squares slope of the mean curve.
    pub slope: f64,
    pub pass: bool,
}

/// Uses the common recorded times of completed paths; passes when
/// `mean − 2·stderr ≤ bound` at every time.
pub fn lyapunov_growth_check(records: &[PathRecord], k1: f64) -> Result<GrowthCheck> {
    let done: Vec<&PathRecord> = records
        .iter()
        .filter(|r| r.status == PathStatus::Completed)
        .collect();
    if done.len() < 2 {
        return Err(Error::Insufficient("growth check needs at least two completed paths".into()));
    }
    let rows = done.iter().map(|r| r.rows.len()).min().unwrap_or(0);
    if rows < 2 {
        return Err(Error::Insufficient("growth check needs at least two recorded times".into()));
    }
    let g0 = done[0].rows[0].lyapunov;
    let mut check = GrowthCheck {
        times: Vec::with_capacity(rows),
        mean: Vec::with_capacity(rows),
        std_err: Vec::with_capacity(rows),
        bound: Vec::with_capacity(rows),
        slope: 0.0,
        pass: true,
    };
    for i in 0..rows {
        let t = done[0].rows[i].t;
        let vals: Vec<f64> = done.iter().map(|r| r.rows[i].lyapunov).collect();
        let (m, sd) = mean_and_sd(&vals);
        let se = sd / libm::sqrt(vals.len() as f64);
        let bound = g0 + k1 * t;
        check.pass &= m - 2.0 * se <= bound;
        check.times.push(t);
        check.mean.push(m);
        check.std_err.push(se);
        check.bound.push(bound);
    }
    check.slope = linear_fit(&check.times, &check.mean)?.slope;
    Ok(check)
}

/// On a flagged path, whether every monitored Sobolev norm grew by at
/// least `factor` over its initial value by the stop time.
pub fn norms_escalated(record: &PathRecord, factor: f64) -> bool {
    let first = &record.rows[0];
    let last = record.final_row();
    last.hs >= factor * first.hs
        && last.hs_minus_1 >= factor * first.hs_minus_1
        && last.hs_minus_3_2 >= factor * first.hs_minus_3_2
}

/// A diverged path must have crossed the blow-up threshold first.
pub fn divergence_ordering_holds(record: &PathRecord) -> bool {
    match record.status {
        PathStatus::Diverged { t } => record.first_threshold_crossing.is_some_and(|c| c <= t),
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Arc<SpectralGrid> {
        SpectralGrid::new(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn blowup_quantity_examples() {
        let g = grid(64);
        assert_eq!(blowup_quantity(&Field::zeros(&g)), 0.0);
        let c = Field::from_fn(&g, libm::cos);
        assert!((blowup_quantity(&c) - 2.0).abs() < 1e-13);
        let u = Field::from_fn(&g, |x| libm::sin(x) * libm::exp(libm::cos(2.0 * x)));
        assert!((blowup_quantity(&u.scale(-3.0)) - 3.0 * blowup_quantity(&u)).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        let g = grid(64);
        assert_eq!(lyapunov_value(&Field::zeros(&g), 3.5), 0.0);
        let c = Field::from_fn(&g, libm::cos);
        let unit = c.scale(1.0 / sobolev_norm(&c, 2.5));
        assert!((lyapunov_value(&unit, 3.5) - libm::log(2.0)).abs() < 1e-14);
        assert!(lyapunov_value(&unit.scale(2.0), 3.5) > lyapunov_value(&unit, 3.5));
    }

    #[test]
    fn pairing_of_cosine_vanishes() {
        let g = grid(64);
        let c = Field::from_fn(&g, libm::cos);
        assert!(transport_pairing(&c, 0.0).abs() < 1e-14);
        assert_eq!(transport_pairing(&Field::zeros(&g), 1.0), 0.0);
    }

    #[test]
    fn commutator_constant_is_finite_and_repeatable() {
        let g = grid(256);
        let q1 = estimate_commutator_constant(&g, 200, 3.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let q2 = estimate_commutator_constant(&g, 200, 3.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(q1, q2);
        assert!(q1.is_finite() && q1 > 0.0);
        let more = estimate_commutator_constant(&g, 400, 3.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(more >= q1);
        assert!(estimate_commutator_constant(&g, 10, 3.1, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn drift_condition_matches_closed_form() {
        // For α = λu the condition reduces to scalar algebra in
        // x = ‖u‖²_{H^{s−1}}, B and P = q²(1+B)^{2θ}.
        let g = grid(128);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let q = TimeProfile::constant(0.9);
        for _ in 0..20 {
            let u = random_band_limited(&g, 30, 2.0, &mut rng).scale(3.0);
            let (s, theta, qh) = (3.1, 1.0, 0.3);
            let dc = drift_condition(&u, 0.0, &q, theta, qh, s);
            let x = sobolev_norm(&u, s - 1.0).powi(2);
            let b = blowup_quantity(&u);
            let p = 0.81 * (1.0 + b).powf(2.0 * theta);
            let lhs = (2.0 * qh * b * x + p * x) / (1.0 + x) - 2.0 * p * x * x / (1.0 + x).powi(2);
            let fac = p * x * x / ((1.0 + x).powi(2) * (1.0 + libm::log1p(x)));
            assert!((dc.lhs - lhs).abs() <= 1e-10 * lhs.abs().max(1.0));
            assert!((dc.k2_factor - fac).abs() <= 1e-10 * fac.max(1.0));
        }
    }

    #[test]
    fn drift_residual_at_zero_and_monotone_in_k2() {
        let g = grid(64);
        let spec = LyapunovSpec {
            k1: 2.5,
            k2: 1.0,
            q_hat: 0.5,
            s: 3.1,
        };
        let q = TimeProfile::constant(1.0);
        assert_eq!(lyapunov_drift_residual(&Field::zeros(&g), 0.0, &q, 1.0, &spec), -2.5);
        let u = Field::from_fn(&g, |x| libm::sin(x) + 0.3 * libm::cos(4.0 * x));
        let mut prev = f64::NEG_INFINITY;
        for k2 in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let r = lyapunov_drift_residual(&u, 0.0, &q, 1.0, &LyapunovSpec { k2, ..spec });
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn drift_residual_negative_for_steep_fields() {
        // With θ = 1 the leading term −P x²/(1+x)² dominates once B is large.
        let g = grid(256);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = TimeProfile::constant(1.0);
        let spec = LyapunovSpec {
            k1: 1.0,
            k2: 0.5,
            q_hat: 1.0,
            s: 3.1,
        };
        for _ in 0..50 {
            let u = random_band_limited(&g, 60, 1.5, &mut rng);
            let u = u.scale(50.0 / blowup_quantity(&u));
            assert!(lyapunov_drift_residual(&u, 0.0, &q, 1.0, &spec) <= 0.0);
        }
    }

    #[test]
    fn fitted_k1_certifies_its_samples() {
        let g = grid(64);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = TimeProfile::constant(1.0);
        let conds: Vec<DriftCondition> = (0..30)
            .map(|i| {
                let u = random_band_limited(&g, 15, 2.0, &mut rng).scale(0.1 * (i + 1) as f64);
                drift_condition(&u, 0.0, &q, 1.0, 0.4, 3.1)
            })
            .collect();
        let k1 = fit_k1(&conds, 0.7);
        assert!(conds.iter().all(|c| c.residual(k1, 0.7) <= 1e-15));
        assert!(conds.iter().any(|c| c.residual(k1 * 0.99, 0.7) > 0.0));
    }

    proptest! {
        #[test]
        fn pairing_obeys_the_commutator_bound(seed in 0u64..1000) {
            let g = grid(256);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q_hat = estimate_commutator_constant(&g, 100, 3.1, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
            let u = random_band_limited(&g, 40, 2.0, &mut rng);
            let n = sobolev_norm(&u, 2.1);
            // Q̂ comes from a finite sample, so allow a modest margin.
            prop_assert!(transport_pairing(&u, 2.1).abs() <= 2.0 * q_hat * blowup_quantity(&u) * n * n);
        }

        #[test]
        fn antisymmetry_holds(seed in 0u64..1000, sigma in 0.0f64..3.0) {
            let g = grid(256);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_band_limited(&g, 40, 1.5, &mut rng);
            let du = bessel(&u, sigma);
            let scale = sobolev_norm(&u, 1.0) * sobolev_norm(&du, 0.0).powi(2);
            prop_assert!(transport_antisymmetry_residual(&u, sigma).abs() <= 1e-11 * scale.max(1e-300));
        }
    }
}
