//! Periodic pseudospectral fields and the Fourier multipliers acting on them.
//!
//! A [`Field`] is a real function on the torus of length `L`, sampled at
//! `x_j = jL/N` and stored as its normalized half spectrum. Wavenumbers are
//! `ξ_k = 2πk/L`. Operator symbols:
//!
//! ```text
//! derivative      iξ
//! hilbert         i·sgn ξ          (so H∂x = −Λ)
//! frac_laplacian  |ξ|^α
//! bessel          (1+ξ²)^{s/2}
//! mollify         ĵ(εξ)
//! ```
//!
//! Odd symbols annihilate the Nyquist mode so that outputs stay real.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
use once_cell::race::OnceBox;
use alloc::boxed::Box;

use crate::error::{Error, Result};
use crate::fft::RealTransform;

/// Default fraction of the resolved band kept after a pointwise product.
pub const TWO_THIRDS: f64 = 2.0 / 3.0;

/// Uniform periodic grid together with its planned transforms.
pub struct SpectralGrid {
    period: f64,
    n: usize,
    dealias_fraction: f64,
    transform: RealTransform,
    log_weights: OnceBox<Vec<f64>>,
}

impl core::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("period", &self.period)
            .field("n", &self.n)
            .field("dealias_fraction", &self.dealias_fraction)
            .finish()
    }
}

impl SpectralGrid {
    /// Grid with the two-thirds dealiasing rule.
    pub fn new(n: usize, period: f64) -> Result<Arc<Self>> {
        Self::with_dealias(n, period, TWO_THIRDS)
    }

    pub fn with_dealias(n: usize, period: f64, dealias_fraction: f64) -> Result<Arc<Self>> {
        if !n.is_power_of_two() || n < 16 {
            return Err(Error::InvalidGrid(alloc::format!(
                "point count {n} must be a power of two >= 16"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidGrid(alloc::format!("period {period} must be positive")));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            return Err(Error::InvalidGrid(alloc::format!(
                "dealias fraction {dealias_fraction} outside (0, 1]"
            )));
        }
        Ok(Arc::new(SpectralGrid {
            period,
            n,
            dealias_fraction,
            transform: RealTransform::new(n),
            log_weights: OnceBox::new(),
        }))
    }

    #[allow(clippy::len_without_is_empty)] // never empty
    pub fn len(&self) -> usize {
        self.n
    }

    /// Number of stored (non-negative) modes, `N/2 + 1`.
    pub fn modes(&self) -> usize {
        self.n / 2 + 1
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn dealias_fraction(&self) -> f64 {
        self.dealias_fraction
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    /// `ξ_k` for a stored mode index `k ∈ [0, N/2]`.
    #[inline]
    pub fn wavenumber(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.period
    }

    /// All resolved wavenumbers, `k = −N/2+1 .. N/2`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let half = (self.n / 2) as i64;
        (-half + 1..=half)
            .map(|k| 2.0 * PI * k as f64 / self.period)
            .collect()
    }

    /// Largest mode index kept by the dealiasing mask.
    pub fn dealias_cutoff(&self) -> usize {
        libm::floor(self.dealias_fraction * (self.n / 2) as f64) as usize
    }

    /// Grid coordinate `x_j = jL/N`.
    #[inline]
    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.period / self.n as f64
    }

    /// Coordinate centred on the middle of the period, `x_j − L/2`.
    #[inline]
    pub fn centered_point(&self, j: usize) -> f64 {
        self.point(j) - 0.5 * self.period
    }

    /// True when both grids describe the same discretization.
    pub fn same_as(&self, other: &SpectralGrid) -> bool {
        core::ptr::eq(self, other)
            || (self.n == other.n
                && self.period == other.period
                && self.dealias_fraction == other.dealias_fraction)
    }

    pub(crate) fn transform(&self) -> &RealTransform {
        &self.transform
    }

    /// `ln(1+ξ_k²)` per stored mode, computed once.
    pub(crate) fn log_weights(&self) -> &[f64] {
        self.log_weights.get_or_init(|| {
            Box::new(
                (0..self.modes())
                    .map(|k| {
                        let xi = self.wavenumber(k);
                        libm::log1p(xi * xi)
                    })
                    .collect(),
            )
        })
    }

    /// Multiplicity of a stored mode in the full spectrum (1 for the zero and
    /// Nyquist modes, 2 otherwise).
    #[inline]
    pub fn multiplicity(&self, k: usize) -> f64 {
        if k == 0 || k == self.n / 2 {
            1.0
        } else {
            2.0
        }
    }
}

/// Regularity index of a Sobolev space.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SobolevIndex(f64);

impl SobolevIndex {
    pub fn new(s: f64) -> Result<Self> {
        if s.is_finite() && s >= 0.0 {
            Ok(SobolevIndex(s))
        } else {
            Err(Error::InvalidParameter(alloc::format!("Sobolev index {s} must be finite and >= 0")))
        }
    }

    /// Index admissible for SPDE runs (strictly above 3).
    pub fn for_evolution(s: f64) -> Result<Self> {
        if s.is_finite() && s > 3.0 {
            Ok(SobolevIndex(s))
        } else {
            Err(Error::InvalidParameter(alloc::format!("evolution runs need s > 3, got {s}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Real periodic field stored by its half spectrum, with lazily cached samples.
pub struct Field {
    grid: Arc<SpectralGrid>,
    coeffs: Vec<Complex64>,
    samples: OnceBox<Vec<f64>>,
}

impl Clone for Field {
    fn clone(&self) -> Self {
        let samples = OnceBox::new();
        if let Some(s) = self.samples.get() {
            let _ = samples.set(Box::new(s.clone()));
        }
        Field {
            grid: self.grid.clone(),
            coeffs: self.coeffs.clone(),
            samples,
        }
    }
}

impl core::fmt::Debug for Field {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Field")
            .field("n", &self.grid.n)
            .field("period", &self.grid.period)
            .finish()
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.coeffs == other.coeffs
    }
}

impl Field {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Field {
        let field = Field {
            grid: grid.clone(),
            coeffs: alloc::vec![Complex64::new(0.0, 0.0); grid.modes()],
            samples: OnceBox::new(),
        };
        let _ = field.samples.set(Box::new(alloc::vec![0.0; grid.len()]));
        field
    }

    pub fn from_samples(grid: &Arc<SpectralGrid>, samples: Vec<f64>) -> Result<Field> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidParameter(alloc::format!(
                "{} samples for a grid of {} points",
                samples.len(),
                grid.len()
            )));
        }
        let coeffs = grid.transform().forward(&samples);
        let field = Field {
            grid: grid.clone(),
            coeffs,
            samples: OnceBox::new(),
        };
        let _ = field.samples.set(Box::new(samples));
        Ok(field)
    }

    /// Samples `f(x_j)` at the grid coordinates `x_j = jL/N`.
    pub fn from_fn(grid: &Arc<SpectralGrid>, f: impl Fn(f64) -> f64) -> Field {
        let samples = (0..grid.len()).map(|j| f(grid.point(j))).collect();
        Field::from_samples(grid, samples).expect("length matches by construction")
    }

    /// Samples `f(x_j − L/2)`, i.e. `f` given on the centred coordinate.
    pub fn from_centered_fn(grid: &Arc<SpectralGrid>, f: impl Fn(f64) -> f64) -> Field {
        let samples = (0..grid.len()).map(|j| f(grid.centered_point(j))).collect();
        Field::from_samples(grid, samples).expect("length matches by construction")
    }

    /// Field from a half spectrum; the imaginary parts of the zero and
    /// Nyquist coefficients are dropped to keep the field real.
    pub fn from_coefficients(grid: &Arc<SpectralGrid>, mut coeffs: Vec<Complex64>) -> Result<Field> {
        if coeffs.len() != grid.modes() {
            return Err(Error::InvalidParameter(alloc::format!(
                "{} coefficients for a grid with {} stored modes",
                coeffs.len(),
                grid.modes()
            )));
        }
        coeffs[0].im = 0.0;
        let last = coeffs.len() - 1;
        coeffs[last].im = 0.0;
        Ok(Field {
            grid: grid.clone(),
            coeffs,
            samples: OnceBox::new(),
        })
    }

    pub(crate) fn from_coefficients_unchecked(grid: &Arc<SpectralGrid>, coeffs: Vec<Complex64>) -> Field {
        Field::from_coefficients(grid, coeffs).expect("coefficient count matches grid")
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    /// Normalized coefficients `c_k`, `k = 0..=N/2`.
    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Grid samples, synthesized on first use.
    pub fn samples(&self) -> &[f64] {
        self.samples
            .get_or_init(|| Box::new(self.grid.transform().inverse(&self.coeffs)))
    }

    /// All coefficients finite; a field failing this is treated as diverged.
    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    fn check_grid(&self, other: &Field) {
        assert!(self.grid.same_as(&other.grid), "fields live on different grids");
    }

    pub fn add(&self, other: &Field) -> Field {
        self.check_grid(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Field::from_coefficients_unchecked(&self.grid, coeffs)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.check_grid(other);
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Field::from_coefficients_unchecked(&self.grid, coeffs)
    }

    pub fn scale(&self, a: f64) -> Field {
        let coeffs = self.coeffs.iter().map(|c| c * a).collect();
        Field::from_coefficients_unchecked(&self.grid, coeffs)
    }

    /// `self + a·x`.
    pub fn axpy(&self, a: f64, x: &Field) -> Field {
        self.check_grid(x);
        let coeffs = self.coeffs.iter().zip(&x.coeffs).map(|(c, d)| c + d * a).collect();
        Field::from_coefficients_unchecked(&self.grid, coeffs)
    }

    /// Applies a symbol given on `ξ ≥ 0`; the conjugate-symmetric extension
    /// to `ξ < 0` is implied. Outputs at the zero and Nyquist modes keep
    /// only their real part.
    pub fn apply_symbol(&self, symbol: impl Fn(f64) -> Complex64) -> Field {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * symbol(self.grid.wavenumber(k)))
            .collect();
        Field::from_coefficients_unchecked(&self.grid, coeffs)
    }

    /// Applies a real even symbol.
    pub fn apply_real_symbol(&self, symbol: impl Fn(f64) -> f64) -> Field {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * symbol(self.grid.wavenumber(k)))
            .collect();
        Field::from_coefficients_unchecked(&self.grid, coeffs)
    }

    /// Value at an arbitrary grid coordinate by direct Fourier summation.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_symbol(x, |_| Complex64::new(1.0, 0.0))
    }

    /// `(m(D) f)(x)` at an arbitrary point by direct Fourier summation, for a
    /// symbol `m` given on `ξ ≥ 0` with conjugate-symmetric extension.
    pub fn eval_symbol(&self, x: f64, symbol: impl Fn(f64) -> Complex64) -> f64 {
        let nyq = self.grid.n / 2;
        let step_angle = self.grid.wavenumber(1) * x;
        let step = Complex64::new(libm::cos(step_angle), libm::sin(step_angle));
        let mut phase = Complex64::new(1.0, 0.0);
        let mut acc = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            // Rotate the phase incrementally, re-anchoring now and then so
            // rounding does not accumulate over long spectra.
            if k % 64 == 0 {
                let a = self.grid.wavenumber(k) * x;
                phase = Complex64::new(libm::cos(a), libm::sin(a));
            }
            let xi = self.grid.wavenumber(k);
            let m = c * symbol(xi);
            if k == 0 {
                acc += m.re;
            } else if k == nyq {
                acc += m.re * phase.re;
            } else {
                acc += 2.0 * (m.re * phase.re - m.im * phase.im);
            }
            phase *= step;
        }
        acc
    }

    /// `g(x) = f(x + shift)`.
    pub fn translate(&self, shift: f64) -> Field {
        self.apply_symbol(|xi| {
            let a = xi * shift;
            Complex64::new(libm::cos(a), libm::sin(a))
        })
    }

    /// Index and value of the largest sample.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (j, &v) in self.samples().iter().enumerate() {
            if v > best.1 {
                best = (j, v);
            }
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.samples().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Zeroes every mode above the grid's dealiasing cutoff.
pub fn dealias(f: &Field) -> Field {
    let cut = f.grid.dealias_cutoff();
    let coeffs = f
        .coeffs
        .iter()
        .enumerate()
        .map(|(k, &c)| if k <= cut { c } else { Complex64::new(0.0, 0.0) })
        .collect();
    Field::from_coefficients_unchecked(&f.grid, coeffs)
}

fn dealias_in_place(grid: &SpectralGrid, coeffs: &mut [Complex64]) {
    let cut = grid.dealias_cutoff();
    for c in coeffs.iter_mut().skip(cut + 1) {
        *c = Complex64::new(0.0, 0.0);
    }
}

/// Pointwise product of sample arrays, transformed and dealiased.
pub fn product_of_samples(grid: &Arc<SpectralGrid>, a: &[f64], b: &[f64]) -> Field {
    let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mut coeffs = grid.transform().forward(&prod);
    dealias_in_place(grid, &mut coeffs);
    Field::from_coefficients_unchecked(grid, coeffs)
}

/// Dealiased pointwise product `a·b`.
pub fn product(a: &Field, b: &Field) -> Field {
    a.check_grid(b);
    product_of_samples(&a.grid, a.samples(), b.samples())
}

/// Dealiased pointwise power `f^p`, `p ≥ 1`.
pub fn power(f: &Field, p: u32) -> Field {
    assert!(p >= 1, "power needs p >= 1");
    if p == 1 {
        return f.clone();
    }
    let vals: Vec<f64> = f.samples().iter().map(|&x| libm::pow(x, p as f64)).collect();
    let mut coeffs = f.grid.transform().forward(&vals);
    dealias_in_place(&f.grid, &mut coeffs);
    Field::from_coefficients_unchecked(&f.grid, coeffs)
}

/// Spectral derivative, symbol `iξ`.
pub fn derivative(f: &Field) -> Field {
    f.apply_symbol(|xi| Complex64::new(0.0, xi))
}

/// Hilbert transform with kernel `1/(y−x)`, symbol `i·sgn ξ`.
pub fn hilbert(f: &Field) -> Field {
    f.apply_symbol(|xi| {
        if xi > 0.0 {
            Complex64::new(0.0, 1.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Fractional Laplacian `Λ^α`, symbol `|ξ|^α`, `α ∈ (0, 2]`.
pub fn frac_laplacian(f: &Field, alpha: f64) -> Field {
    assert!(alpha > 0.0 && alpha <= 2.0, "alpha must lie in (0, 2]");
    if alpha == 1.0 {
        f.apply_real_symbol(|xi| xi)
    } else {
        f.apply_real_symbol(|xi| if xi == 0.0 { 0.0 } else { libm::pow(xi, alpha) })
    }
}

/// Bessel potential `D^s`, symbol `(1+ξ²)^{s/2}`; any real `s`.
pub fn bessel(f: &Field, s: f64) -> Field {
    let lw = f.grid.log_weights();
    let coeffs = f
        .coeffs
        .iter()
        .zip(lw)
        .map(|(c, &w)| c * libm::exp(0.5 * s * w))
        .collect();
    Field::from_coefficients_unchecked(&f.grid, coeffs)
}

/// Mollifier symbol: 1 on `|ζ| ≤ 1`, 0 on `|ζ| ≥ 2`, smooth and monotone between.
pub fn j_hat(zeta: f64) -> f64 {
    let a = zeta.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let d = a - 1.0;
        libm::exp(1.0 - 1.0 / (1.0 - d * d))
    }
}

/// Friedrichs mollifier `J_ε`, symbol `ĵ(εξ)`.
pub fn mollify(f: &Field, eps: f64) -> Field {
    assert!(eps > 0.0 && eps < 1.0, "mollifier scale must lie in (0, 1)");
    f.apply_real_symbol(|xi| j_hat(eps * xi))
}

/// Discrete `H^s` norm, `(L Σ_k (1+ξ_k²)^s |c_k|²)^{1/2}` over the full spectrum.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let grid = &f.grid;
    let mut acc = 0.0;
    if s == 0.0 {
        for (k, c) in f.coeffs.iter().enumerate() {
            acc += grid.multiplicity(k) * c.norm_sqr();
        }
    } else {
        let lw = grid.log_weights();
        for (k, c) in f.coeffs.iter().enumerate() {
            let e = c.norm_sqr();
            if e != 0.0 {
                acc += grid.multiplicity(k) * libm::exp(s * lw[k]) * e;
            }
        }
    }
    libm::sqrt(grid.period * acc)
}

/// Several Sobolev norms in one pass over the spectrum.
pub fn sobolev_norms<const M: usize>(f: &Field, s: [f64; M]) -> [f64; M] {
    let grid = &f.grid;
    let lw = grid.log_weights();
    let mut acc = [0.0; M];
    for (k, c) in f.coeffs.iter().enumerate() {
        let e = c.norm_sqr();
        if e == 0.0 {
            continue;
        }
        let m = grid.multiplicity(k) * e;
        for (a, &si) in acc.iter_mut().zip(s.iter()) {
            *a += if si == 0.0 { m } else { m * libm::exp(si * lw[k]) };
        }
    }
    acc.map(|a| libm::sqrt(grid.period * a))
}

/// `H^s` inner product `L Σ (1+ξ²)^s Re(c_k conj(d_k))` over the full spectrum.
pub fn sobolev_inner(f: &Field, g: &Field, s: f64) -> f64 {
    f.check_grid(g);
    let grid = &f.grid;
    let lw = grid.log_weights();
    let mut acc = 0.0;
    for (k, (a, b)) in f.coeffs.iter().zip(&g.coeffs).enumerate() {
        let w = if s == 0.0 { 1.0 } else { libm::exp(s * lw[k]) };
        acc += grid.multiplicity(k) * w * (a.re * b.re + a.im * b.im);
    }
    grid.period * acc
}

/// Precomputed `H^s` weights `L·mult_k·(1+ξ_k²)^s` for repeated norms.
#[derive(Debug, Clone)]
pub struct NormWeights {
    weights: Vec<f64>,
}

impl NormWeights {
    pub fn new(grid: &SpectralGrid, s: f64) -> Self {
        let weights = grid
            .log_weights()
            .iter()
            .enumerate()
            .map(|(k, &lw)| grid.period * grid.multiplicity(k) * libm::exp(s * lw))
            .collect();
        NormWeights { weights }
    }

    pub fn norm_sq(&self, f: &Field) -> f64 {
        self.weights
            .iter()
            .zip(&f.coeffs)
            .map(|(w, c)| w * c.norm_sqr())
            .sum()
    }

    pub fn norm(&self, f: &Field) -> f64 {
        libm::sqrt(self.norm_sq(f))
    }

    /// Norm of `f − g` without forming the difference.
    pub fn distance(&self, f: &Field, g: &Field) -> f64 {
        f.check_grid(g);
        libm::sqrt(
            self.weights
                .iter()
                .zip(f.coeffs.iter().zip(&g.coeffs))
                .map(|(w, (a, b))| w * (a - b).norm_sqr())
                .sum(),
        )
    }
}

/// `(sup|f|, sup|f_x|, sup|Hf_x|)` over the grid samples.
pub fn sup_norms(f: &Field) -> (f64, f64, f64) {
    let fx = derivative(f);
    let hfx = hilbert(&fx);
    (f.max_abs(), fx.max_abs(), hfx.max_abs())
}

/// Fraction of `L²` energy carried by modes above `limit`.
pub fn relative_energy_above(f: &Field, limit: usize) -> f64 {
    let mut hi = 0.0;
    let mut total = 0.0;
    for (k, c) in f.coeffs.iter().enumerate() {
        let e = f.grid.multiplicity(k) * c.norm_sqr();
        total += e;
        if k > limit {
            hi += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        hi / total
    }
}
