//! Real and complex discrete Fourier transforms.
//!
//! With the `std` feature the transforms are planned by `realfft`/`rustfft`;
//! without it a radix-2 Cooley–Tukey fallback is used. Both backends share
//! the normalization used throughout the crate:
//!
//! ```text
//! c_k = (1/N) Σ_j f_j e^{-2πi jk/N},   f_j = Σ_k c_k e^{2πi jk/N}
//! ```

use alloc::vec::Vec;
use num_complex::Complex64;

#[cfg(feature = "std")]
use alloc::sync::Arc;

/// Planned real-to-complex transform pair of a fixed power-of-two length.
pub struct RealTransform {
    n: usize,
    #[cfg(feature = "std")]
    forward: Arc<dyn realfft::RealToComplex<f64>>,
    #[cfg(feature = "std")]
    inverse: Arc<dyn realfft::ComplexToReal<f64>>,
    #[cfg(not(feature = "std"))]
    radix2: Radix2,
}

impl RealTransform {
    pub fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        #[cfg(feature = "std")]
        {
            let mut planner = realfft::RealFftPlanner::<f64>::new();
            RealTransform {
                n,
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            }
        }
        #[cfg(not(feature = "std"))]
        {
            RealTransform {
                n,
                radix2: Radix2::new(n),
            }
        }
    }

    #[allow(clippy::len_without_is_empty)] // never empty
    pub fn len(&self) -> usize {
        self.n
    }

    /// Normalized half spectrum (length N/2+1) of real samples.
    pub fn forward(&self, samples: &[f64]) -> Vec<Complex64> {
        assert_eq!(samples.len(), self.n);
        let scale = 1.0 / self.n as f64;
        #[cfg(feature = "std")]
        let mut out = {
            let mut input = samples.to_vec();
            let mut out = self.forward.make_output_vec();
            self.forward
                .process(&mut input, &mut out)
                .expect("real forward transform length mismatch");
            out
        };
        #[cfg(not(feature = "std"))]
        let mut out = {
            let mut buf: Vec<Complex64> =
                samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            self.radix2.process(&mut buf, false);
            buf.truncate(self.n / 2 + 1);
            buf
        };
        for c in out.iter_mut() {
            *c *= scale;
        }
        out[0].im = 0.0;
        let last = out.len() - 1;
        out[last].im = 0.0;
        out
    }

    /// Samples from a normalized half spectrum. The imaginary parts of the
    /// zero and Nyquist coefficients are ignored.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.n / 2 + 1);
        let mut input = coeffs.to_vec();
        input[0].im = 0.0;
        let last = input.len() - 1;
        input[last].im = 0.0;
        #[cfg(feature = "std")]
        {
            let mut out = self.inverse.make_output_vec();
            self.inverse
                .process(&mut input, &mut out)
                .expect("real inverse transform length mismatch");
            out
        }
        #[cfg(not(feature = "std"))]
        {
            let n = self.n;
            let mut buf = Vec::with_capacity(n);
            buf.extend_from_slice(&input);
            for k in (1..n / 2).rev() {
                buf.push(input[k].conj());
            }
            self.radix2.process(&mut buf, true);
            buf.into_iter().map(|c| c.re).collect()
        }
    }
}

/// In-place complex DFT of power-of-two length: forward uses e^{-2πi jk/N}
/// and divides by N, inverse uses e^{+2πi jk/N} without scaling.
pub fn complex_transform(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    assert!(n.is_power_of_two());
    #[cfg(feature = "std")]
    {
        let mut planner = rustfft::FftPlanner::<f64>::new();
        let plan = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        plan.process(data);
    }
    #[cfg(not(feature = "std"))]
    {
        Radix2::new(n).process(data, inverse);
    }
    if !inverse {
        let scale = 1.0 / n as f64;
        for c in data.iter_mut() {
            *c *= scale;
        }
    }
}

#[cfg(any(not(feature = "std"), test))]
pub(crate) struct Radix2 {
    n: usize,
    twiddles: Vec<Complex64>,
}

#[cfg(any(not(feature = "std"), test))]
impl Radix2 {
    pub(crate) fn new(n: usize) -> Self {
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * core::f64::consts::PI * k as f64 / n as f64;
                Complex64::new(libm::cos(a), libm::sin(a))
            })
            .collect();
        Radix2 { n, twiddles }
    }

    /// Unnormalized transform; `inverse` conjugates the twiddles.
    pub(crate) fn process(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n);
        let bits = n.trailing_zeros();
        if bits == 0 {
            return;
        }
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if j > i {
                data.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..len / 2 {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = data[start + k];
                    let b = data[start + k + len / 2] * w;
                    data[start + k] = a + b;
                    data[start + k + len / 2] = a - b;
                }
            }
            len <<= 1;
        }
    }
}
