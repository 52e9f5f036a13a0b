//! Residuals of the operator identities used by the analysis, in the exact
//! form they take on the torus.
//!
//! On the line, `Λ(x f) = x Λf − Hf`. On a period `L` the coordinate is
//! replaced by the chord `S(x) = (L/π) sin(πx/L)` (centred on the middle of
//! the period) and the identity becomes
//!
//! ```text
//! Λ(S f) = S Λf − cos(πx/L) Hf + (π/L) mean(f) S
//! ```
//!
//! which holds exactly for every band-limited periodic `f`. `S f` is
//! anti-periodic, so `Λ` acts on it through half-integer modes.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::complex_transform;
use crate::spectral::{
    hilbert, product, relative_energy_above, sobolev_norm, frac_laplacian, Field, SpectralGrid,
};

const BAND_TOLERANCE: f64 = 1e-24;

fn require_band(f: &Field, limit: usize) -> Result<()> {
    let excess = relative_energy_above(f, limit);
    if excess > BAND_TOLERANCE {
        Err(Error::BandLimit { excess, limit })
    } else {
        Ok(())
    }
}

/// `‖2H(f·Hf) − ((Hf)² − f²) − mean‖_{L²}`; needs `f` band-limited to half
/// the dealiasing cutoff so that the products are exact.
pub fn cotlar_residual(f: &Field) -> Result<f64> {
    require_band(f, f.grid().dealias_cutoff() / 2)?;
    let hf = hilbert(f);
    let lhs = hilbert(&product(f, &hf)).scale(2.0);
    let rhs = product(&hf, &hf).sub(&product(f, f));
    let mut coeffs = lhs.sub(&rhs).into_coefficients();
    coeffs[0] = Complex64::new(0.0, 0.0);
    let d = Field::from_coefficients(f.grid(), coeffs)?;
    Ok(sobolev_norm(&d, 0.0))
}

/// Samples of `Λg` for an anti-periodic `g` given by its grid samples.
pub fn antiperiodic_frac_laplacian(grid: &Arc<SpectralGrid>, g: &[f64]) -> Vec<f64> {
    let mut data = modulate_down(grid, g);
    complex_transform(&mut data, false);
    let n = grid.len();
    for (k, c) in data.iter_mut().enumerate() {
        *c *= half_integer_wavenumber(grid, k).abs();
    }
    complex_transform(&mut data, true);
    let l = grid.period();
    data.iter()
        .enumerate()
        .map(|(j, c)| {
            let a = PI * grid.point(j) / l;
            (c * Complex64::new(libm::cos(a), libm::sin(a))).re
        })
        .take(n)
        .collect()
}

/// `‖g‖²_{Ḣ^{1/2}} = L Σ |ξ| |a_ξ|²` for an anti-periodic `g`, summed over
/// the half-integer wavenumbers `ξ = 2π(k+½)/L`.
pub fn antiperiodic_half_norm_sq(grid: &Arc<SpectralGrid>, g: &[f64]) -> f64 {
    let mut data = modulate_down(grid, g);
    complex_transform(&mut data, false);
    let acc: f64 = data
        .iter()
        .enumerate()
        .map(|(k, c)| half_integer_wavenumber(grid, k).abs() * c.norm_sqr())
        .sum();
    grid.period() * acc
}

fn modulate_down(grid: &Arc<SpectralGrid>, g: &[f64]) -> Vec<Complex64> {
    assert_eq!(g.len(), grid.len());
    let l = grid.period();
    g.iter()
        .enumerate()
        .map(|(j, &v)| {
            let a = -PI * grid.point(j) / l;
            Complex64::new(v * libm::cos(a), v * libm::sin(a))
        })
        .collect()
}

fn half_integer_wavenumber(grid: &SpectralGrid, k: usize) -> f64 {
    let n = grid.len();
    let signed = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
    2.0 * PI * (signed + 0.5) / grid.period()
}

/// `‖Λ(S f) − S Λf + cos(πx_c/L) Hf − (π/L) mean(f) S‖_{L²}` with the chord
/// `S = (L/π) sin(πx_c/L)` on the centred coordinate `x_c`. Needs `f`
/// band-limited below the dealiasing cutoff.
pub fn lambda_product_residual(f: &Field) -> Result<f64> {
    let grid = f.grid();
    require_band(f, grid.dealias_cutoff())?;
    let l = grid.period();
    let n = grid.len();
    let chord: Vec<f64> = (0..n)
        .map(|j| l / PI * libm::sin(PI * grid.centered_point(j) / l))
        .collect();
    let cosine: Vec<f64> = (0..n)
        .map(|j| libm::cos(PI * grid.centered_point(j) / l))
        .collect();
    let fs = f.samples();
    let sf: Vec<f64> = fs.iter().zip(&chord).map(|(a, b)| a * b).collect();
    let lam_sf = antiperiodic_frac_laplacian(grid, &sf);
    let lam_f = frac_laplacian(f, 1.0);
    let hf = hilbert(f);
    let mean = f.mean();
    let mut acc = 0.0;
    for j in 0..n {
        let r = lam_sf[j] - chord[j] * lam_f.samples()[j] + cosine[j] * hf.samples()[j]
            - PI / l * mean * chord[j];
        acc += r * r;
    }
    Ok(libm::sqrt(l * acc / n as f64))
}

/// `‖ψ(x)·cos(ξ_M x − α)‖_{H^r}` where `ψ` is `envelope` and `ξ_M = 2πM/L`
/// is the carrier, computed from shifted copies of the envelope spectrum
/// so the carrier never has to be sampled.
pub fn modulated_norm(envelope: &Field, carrier_mode: u64, phase: f64, r: f64) -> f64 {
    let grid = envelope.grid();
    let l = grid.period();
    let half = (grid.len() / 2) as i64;
    let m = carrier_mode as i64;
    // Full spectrum of the envelope, signed index j ∈ [−N/2+1, N/2].
    let coeff = |j: i64| -> Complex64 {
        let c = envelope.coefficients();
        if j == half || j == -half {
            // Nyquist cosine split evenly between ±N/2.
            c[half as usize] * 0.5
        } else if j >= 0 {
            c[j as usize]
        } else {
            c[(-j) as usize].conj()
        }
    };
    let weight = |k: i64| -> f64 {
        let xi = 2.0 * PI * k as f64 / l;
        libm::pow(1.0 + xi * xi, r)
    };
    let up = Complex64::new(libm::cos(phase), -libm::sin(phase)) * 0.5;
    let down = up.conj();
    let mut acc = 0.0;
    if 2 * m > 2 * half {
        for j in -half..=half {
            let e = coeff(j).norm_sqr() * 0.25;
            acc += e * (weight(j + m) + weight(j - m));
        }
    } else {
        for k in (-half - m)..=(half + m) {
            let mut d = Complex64::new(0.0, 0.0);
            let a = k - m;
            if (-half..=half).contains(&a) {
                d += up * coeff(a);
            }
            let b = k + m;
            if (-half..=half).contains(&b) {
                d += down * coeff(b);
            }
            acc += weight(k) * d.norm_sqr();
        }
    }
    libm::sqrt(l * acc)
}
