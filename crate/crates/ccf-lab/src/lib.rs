//! Ensemble harness, result files, configuration and the studies behind the
//! `ccf-lab` command line.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod studies;

pub use config::LabConfig;
pub use error::{LabError, LabResult};
