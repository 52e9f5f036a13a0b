//! Noise coefficients `h(t, u)` and the truncated cylindrical Wiener driver.
//!
//! A model with `K` driving components returns `K` coefficient fields; the
//! stochastic increment over a step is `Σ_j h_j(t,u) ΔW_j`. For the
//! cylindrical families every component is the same field scaled by
//! `c_j = j^{-a}`, which [`NoiseModel::increment`] exploits.

use alloc::format;
use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{derivative, hilbert, power, sobolev_norm, sup_norms, Field};

/// Scalar function of time used for `q(t)` and `b(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant { value: f64 },
    /// `amplitude · e^{−rate·t}`
    Exponential { amplitude: f64, rate: f64 },
    /// `mean + amplitude · cos(frequency·t)`
    Oscillating { mean: f64, amplitude: f64, frequency: f64 },
}

impl TimeProfile {
    pub fn constant(value: f64) -> Self {
        TimeProfile::Constant { value }
    }

    pub fn exponential(amplitude: f64, rate: f64) -> Self {
        TimeProfile::Exponential { amplitude, rate }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant { value } => value,
            TimeProfile::Exponential { amplitude, rate } => amplitude * libm::exp(-rate * t),
            TimeProfile::Oscillating {
                mean,
                amplitude,
                frequency,
            } => mean + amplitude * libm::cos(frequency * t),
        }
    }

    /// `∫_a^b f(t)² dt`, in closed form.
    pub fn integral_of_square(&self, a: f64, b: f64) -> f64 {
        match *self {
            TimeProfile::Constant { value } => value * value * (b - a),
            TimeProfile::Exponential { amplitude, rate } => {
                if rate == 0.0 {
                    amplitude * amplitude * (b - a)
                } else {
                    amplitude * amplitude / (2.0 * rate)
                        * (libm::exp(-2.0 * rate * a) - libm::exp(-2.0 * rate * b))
                }
            }
            TimeProfile::Oscillating {
                mean,
                amplitude,
                frequency,
            } => {
                let prim = |t: f64| {
                    let mut v = mean * mean * t + 0.5 * amplitude * amplitude * t;
                    if frequency != 0.0 {
                        v += 2.0 * mean * amplitude * libm::sin(frequency * t) / frequency
                            + amplitude * amplitude * libm::sin(2.0 * frequency * t)
                                / (4.0 * frequency);
                    } else {
                        v += (2.0 * mean * amplitude + 0.5 * amplitude * amplitude) * t;
                    }
                    v
                };
                prim(b) - prim(a)
            }
        }
    }

    /// `∫_0^∞ f²` when finite.
    pub fn total_square_integral(&self) -> Option<f64> {
        match *self {
            TimeProfile::Constant { value: 0.0 } => Some(0.0),
            TimeProfile::Exponential { amplitude, rate } if rate > 0.0 || amplitude == 0.0 => {
                Some(if amplitude == 0.0 {
                    0.0
                } else {
                    amplitude * amplitude / (2.0 * rate)
                })
            }
            TimeProfile::Oscillating {
                mean: 0.0,
                amplitude: 0.0,
                ..
            } => Some(0.0),
            _ => None,
        }
    }

    /// `(min, max)` of the profile sampled on `[0, horizon]`.
    pub fn range_on(&self, horizon: f64) -> (f64, f64) {
        let samples = 4096;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=samples {
            let v = self.eval(horizon * i as f64 / samples as f64);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            TimeProfile::Constant { value } => value == 0.0,
            TimeProfile::Exponential { amplitude, .. } => amplitude == 0.0,
            TimeProfile::Oscillating {
                mean, amplitude, ..
            } => mean == 0.0 && amplitude == 0.0,
        }
    }
}

/// Truncation `𝕎 ≈ Σ_{j≤K} W_j e_j` with coefficient `c_j = j^{-decay}`
/// attached to component `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WienerSpec {
    pub components: usize,
    pub decay: f64,
}

impl Default for WienerSpec {
    fn default() -> Self {
        WienerSpec {
            components: 8,
            decay: 2.0,
        }
    }
}

impl WienerSpec {
    pub fn scalar() -> Self {
        WienerSpec {
            components: 1,
            decay: 0.0,
        }
    }

    /// Coefficient of component `j` (0-based index, so `c = (j+1)^{-a}`).
    pub fn coefficient(&self, j: usize) -> f64 {
        libm::pow((j + 1) as f64, -self.decay)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        (0..self.components).map(|j| self.coefficient(j)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::InvalidParameter("wiener.components must be ≥ 1".into()));
        }
        if !(self.decay >= 0.0) {
            return Err(Error::InvalidParameter("wiener.decay must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// The noise coefficient families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NoiseModel {
    /// `q(t)(1−∂xx)^{-1}∂x[(u_x)^k + (Hu_x)^n]` on each cylindrical component.
    GeneralH {
        q: TimeProfile,
        power_k: u32,
        power_n: u32,
        wiener: WienerSpec,
    },
    /// `q(t)(1 + ‖u_x‖∞ + ‖Hu_x‖∞)^θ u`, one Brownian motion.
    StrongAlpha { q: TimeProfile, theta: f64 },
    /// `b(t) u`, one Brownian motion, `b² < b_star`.
    LinearB { b: TimeProfile, b_star: f64 },
    /// `q(t) e^{−1/‖u‖_{H^σ₀}} (1−∂xx)^{-1}∂x[(u_x)^k + (Hu_x)^n]`.
    InstabilityH {
        q: TimeProfile,
        power_k: u32,
        power_n: u32,
        sigma0: f64,
        wiener: WienerSpec,
    },
    Zero,
}

impl NoiseModel {
    /// Number of scalar Brownian drivers.
    pub fn components(&self) -> usize {
        match self {
            NoiseModel::GeneralH { wiener, .. } | NoiseModel::InstabilityH { wiener, .. } => {
                wiener.components
            }
            NoiseModel::StrongAlpha { .. } | NoiseModel::LinearB { .. } => 1,
            NoiseModel::Zero => 0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, NoiseModel::Zero)
    }

    /// Parameter checks on the run horizon. `q_hat` is the empirical
    /// commutator constant, needed only for `StrongAlpha` with `θ = 1/2`.
    pub fn validate(&self, horizon: f64, q_hat: Option<f64>) -> Result<()> {
        match *self {
            NoiseModel::GeneralH {
                power_k,
                power_n,
                wiener,
                ..
            } => {
                check_powers(power_k, power_n)?;
                wiener.validate()
            }
            NoiseModel::StrongAlpha { q, theta } => {
                let (lo, hi) = q.range_on(horizon);
                if theta > 0.5 {
                    if !(lo > 0.0 && hi > lo * (1.0 - 1e-15)) {
                        return Err(Error::InvalidParameter(format!(
                            "strong noise with θ > 1/2 needs q bounded below by a positive constant (min q = {lo})"
                        )));
                    }
                    Ok(())
                } else if theta == 0.5 {
                    let qh = q_hat.ok_or_else(|| {
                        Error::InvalidParameter(
                            "strong noise with θ = 1/2 needs an estimated commutator constant".into(),
                        )
                    })?;
                    if lo > 2.0 * qh {
                        Ok(())
                    } else {
                        Err(Error::InvalidParameter(format!(
                            "strong noise with θ = 1/2 needs min q > 2Q̂ (min q = {lo}, Q̂ = {qh})"
                        )))
                    }
                } else {
                    Err(Error::InvalidParameter(format!(
                        "strong noise exponent θ = {theta} must be ≥ 1/2"
                    )))
                }
            }
            NoiseModel::LinearB { b, b_star } => {
                let (lo, hi) = b.range_on(horizon);
                if lo < 0.0 {
                    return Err(Error::InvalidParameter("b(t) must be nonnegative".into()));
                }
                if hi * hi >= b_star {
                    return Err(Error::InvalidParameter(format!(
                        "b(t)² reaches {} ≥ b_star = {b_star}",
                        hi * hi
                    )));
                }
                Ok(())
            }
            NoiseModel::InstabilityH {
                power_k,
                power_n,
                sigma0,
                wiener,
                ..
            } => {
                check_powers(power_k, power_n)?;
                if !(sigma0 > 1.5 && sigma0 < 1.75) {
                    return Err(Error::InvalidParameter(format!(
                        "sigma0 = {sigma0} must lie in (3/2, 7/4)"
                    )));
                }
                wiener.validate()
            }
            NoiseModel::Zero => Ok(()),
        }
    }

    /// The `K` coefficient fields `h_j(t, u)`.
    pub fn evaluate(&self, t: f64, u: &Field) -> Vec<Field> {
        match *self {
            NoiseModel::GeneralH {
                q,
                power_k,
                power_n,
                wiener,
            } => eval_general_h(&q, power_k, power_n, &wiener, t, u),
            NoiseModel::StrongAlpha { q, theta } => alloc::vec![eval_strong_alpha(&q, theta, t, u)],
            NoiseModel::LinearB { b, .. } => alloc::vec![eval_linear_b(&b, t, u)],
            NoiseModel::InstabilityH {
                q,
                power_k,
                power_n,
                sigma0,
                wiener,
            } => {
                let base = eval_instability_h(&q, power_k, power_n, sigma0, t, u);
                wiener
                    .coefficients()
                    .into_iter()
                    .map(|c| base.scale(c))
                    .collect()
            }
            NoiseModel::Zero => Vec::new(),
        }
    }

    /// `Σ_j h_j(t,u) ΔW_j`, computed with one field evaluation.
    pub fn increment(&self, t: f64, u: &Field, dw: &[f64]) -> Field {
        assert_eq!(dw.len(), self.components());
        match *self {
            NoiseModel::GeneralH {
                q,
                power_k,
                power_n,
                wiener,
            } => {
                let w: f64 = dw.iter().enumerate().map(|(j, d)| wiener.coefficient(j) * d).sum();
                gradient_forcing(u, power_k, power_n).scale(q.eval(t) * w)
            }
            NoiseModel::InstabilityH {
                q,
                power_k,
                power_n,
                sigma0,
                wiener,
            } => {
                let w: f64 = dw.iter().enumerate().map(|(j, d)| wiener.coefficient(j) * d).sum();
                eval_instability_h(&q, power_k, power_n, sigma0, t, u).scale(w)
            }
            NoiseModel::StrongAlpha { q, theta } => u.scale(strong_alpha_factor(&q, theta, t, u) * dw[0]),
            NoiseModel::LinearB { b, .. } => u.scale(b.eval(t) * dw[0]),
            NoiseModel::Zero => Field::zeros(u.grid()),
        }
    }

    /// `Σ_j ‖h_j(t,u)‖²_{H^s}`, the truncated Hilbert–Schmidt norm.
    pub fn hilbert_schmidt_sq(&self, t: f64, u: &Field, s: f64) -> f64 {
        match *self {
            NoiseModel::GeneralH {
                q,
                power_k,
                power_n,
                wiener,
            } => {
                let base = sobolev_norm(&gradient_forcing(u, power_k, power_n), s) * q.eval(t).abs();
                base * base * sum_of_squares(&wiener)
            }
            NoiseModel::InstabilityH {
                q,
                power_k,
                power_n,
                sigma0,
                wiener,
            } => {
                let base = sobolev_norm(&eval_instability_h(&q, power_k, power_n, sigma0, t, u), s);
                base * base * sum_of_squares(&wiener)
            }
            NoiseModel::StrongAlpha { q, theta } => {
                let n = sobolev_norm(u, s) * strong_alpha_factor(&q, theta, t, u);
                n * n
            }
            NoiseModel::LinearB { b, .. } => {
                let n = sobolev_norm(u, s) * b.eval(t);
                n * n
            }
            NoiseModel::Zero => 0.0,
        }
    }
}

fn check_powers(k: u32, n: u32) -> Result<()> {
    if k == 0 || n == 0 {
        Err(Error::InvalidParameter("noise exponents k, n must be ≥ 1".into()))
    } else {
        Ok(())
    }
}

fn sum_of_squares(w: &WienerSpec) -> f64 {
    w.coefficients().iter().map(|c| c * c).sum()
}

/// `(1−∂xx)^{-1}∂x`, symbol `iξ/(1+ξ²)`.
pub fn helmholtz_inverse_dx(f: &Field) -> Field {
    f.apply_symbol(|xi| Complex64::new(0.0, xi / (1.0 + xi * xi)))
}

/// `(1−∂xx)^{-1}∂x[(u_x)^k + (Hu_x)^n]` with dealiased powers.
pub fn gradient_forcing(u: &Field, k: u32, n: u32) -> Field {
    let ux = derivative(u);
    let hux = hilbert(&ux);
    helmholtz_inverse_dx(&power(&ux, k).add(&power(&hux, n)))
}

pub fn eval_general_h(
    q: &TimeProfile,
    k: u32,
    n: u32,
    wiener: &WienerSpec,
    t: f64,
    u: &Field,
) -> Vec<Field> {
    let base = gradient_forcing(u, k, n).scale(q.eval(t));
    wiener
        .coefficients()
        .into_iter()
        .map(|c| base.scale(c))
        .collect()
}

/// Scalar `q(t)(1 + ‖u_x‖∞ + ‖Hu_x‖∞)^θ`.
pub fn strong_alpha_factor(q: &TimeProfile, theta: f64, t: f64, u: &Field) -> f64 {
    let (_, ux, hux) = sup_norms(u);
    q.eval(t) * libm::pow(1.0 + ux + hux, theta)
}

pub fn eval_strong_alpha(q: &TimeProfile, theta: f64, t: f64, u: &Field) -> Field {
    u.scale(strong_alpha_factor(q, theta, t, u))
}

pub fn eval_linear_b(b: &TimeProfile, t: f64, u: &Field) -> Field {
    u.scale(b.eval(t))
}

/// `e^{−1/r}` extended by 0 at `r = 0`.
pub fn damping_factor(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        libm::exp(-1.0 / r)
    }
}

/// The unit-coefficient component of the instability noise.
pub fn eval_instability_h(q: &TimeProfile, k: u32, n: u32, sigma0: f64, t: f64, u: &Field) -> Field {
    let factor = damping_factor(sobolev_norm(u, sigma0));
    if factor == 0.0 {
        return Field::zeros(u.grid());
    }
    gradient_forcing(u, k, n).scale(q.eval(t) * factor)
}

/// `K` independent `N(0, dt)` increments.
pub fn sample_wiener_increments<R: Rng + ?Sized>(components: usize, dt: f64, rng: &mut R) -> Vec<f64> {
    let sd = libm::sqrt(dt);
    (0..components)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            sd * z
        })
        .collect()
}
