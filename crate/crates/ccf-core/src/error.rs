use alloc::string::String;

/// Errors reported by the numerical kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field violates the band limit: relative energy {excess:e} above mode {limit}")]
    BandLimit { excess: f64, limit: usize },
    #[error("no clean interior maximum: {0}")]
    NoCleanMaximum(String),
    #[error("not enough data: {0}")]
    Insufficient(String),
}

pub type Result<T> = core::result::Result<T, Error>;
