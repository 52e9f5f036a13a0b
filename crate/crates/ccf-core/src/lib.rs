//! Numerical core for the stochastic CCF transport equation
//! `du + (Hu)u_x dt = h(t,u) dW` on a periodic domain.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod exec;
pub mod fft;
pub mod girsanov;
pub mod brownian;
pub mod diagnostics;
pub mod identities;
pub mod instability;
pub mod integrator;
pub mod noise;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use spectral::{Field, SobolevIndex, SpectralGrid};
