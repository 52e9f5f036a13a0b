//! Execution strategy for independent path jobs.
//!
//! Jobs are indexed; a runner may evaluate them in any order and on any
//! number of workers but must return results in index order, so outputs do
//! not depend on the worker count.

use alloc::vec::Vec;

pub trait PathRunner {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl PathRunner for Sequential {
    fn map<T, F>(&self, count: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..count).map(job).collect()
    }
}

/// Seed of path `index` in an ensemble with base seed `base`.
pub fn path_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}
