//! Counter-based Brownian paths that can be refined without redrawing.
//!
//! Time is cut into base intervals of length `Δ`. The increment over base
//! interval `i` is the root of a binary tree; a node with increment `X`
//! over length `h` splits into `X/2 + √(h/4)·Z` and the remainder, which is
//! the Brownian bridge law. Every normal `Z` is drawn from a ChaCha stream
//! addressed by `(seed, i, node)`, so any refinement pattern reads the same
//! path.

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Finest dyadic level supported below a base interval.
pub const MAX_LEVEL: u32 = 40;

#[derive(Debug, Clone)]
pub struct BrownianTree {
    seed: u64,
    base_dt: f64,
    components: usize,
}

impl BrownianTree {
    pub fn new(seed: u64, base_dt: f64, components: usize) -> Self {
        assert!(base_dt > 0.0);
        BrownianTree {
            seed,
            base_dt,
            components,
        }
    }

    pub fn base_dt(&self) -> f64 {
        self.base_dt
    }

    pub fn components(&self) -> usize {
        self.components
    }

    fn normals(&self, base: u64, node: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(base);
        rng.set_word_pos((node as u128) << 20);
        (0..self.components).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// Increments over `[j·h, (j+1)·h]` with `h = Δ/2^level`.
    pub fn increment(&self, level: u32, j: u64) -> Vec<f64> {
        assert!(level <= MAX_LEVEL);
        if self.components == 0 {
            return Vec::new();
        }
        let base = j >> level;
        let sd = libm::sqrt(self.base_dt);
        let mut x: Vec<f64> = self.normals(base, 1).into_iter().map(|z| sd * z).collect();
        let mut node = 1u64;
        let mut h = self.base_dt;
        for depth in (0..level).rev() {
            let right = (j >> depth) & 1 == 1;
            let child = 2 * node;
            let z = self.normals(base, child);
            let spread = libm::sqrt(h / 4.0);
            for (xi, zi) in x.iter_mut().zip(z) {
                let left = 0.5 * *xi + spread * zi;
                *xi = if right { *xi - left } else { left };
            }
            node = child + right as u64;
            h *= 0.5;
        }
        x
    }

    /// Sum of the increments over `count` consecutive intervals of `level`
    /// starting at index `j`.
    pub fn increment_span(&self, level: u32, j: u64, count: u64) -> Vec<f64> {
        let mut acc = vec![0.0; self.components];
        for i in 0..count {
            for (a, d) in acc.iter_mut().zip(self.increment(level, j + i)) {
                *a += d;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn children_sum_to_parent() {
        let tree = BrownianTree::new(5, 0.25, 3);
        for level in 0..6u32 {
            for j in 0..8u64 {
                let parent = tree.increment(level, j);
                let a = tree.increment(level + 1, 2 * j);
                let b = tree.increment(level + 1, 2 * j + 1);
                for k in 0..3 {
                    assert!((parent[k] - a[k] - b[k]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn refined_paths_agree_at_coarse_times() {
        let tree = BrownianTree::new(17, 0.1, 1);
        let coarse: f64 = (0..10).map(|j| tree.increment(0, j)[0]).sum();
        let fine = tree.increment_span(5, 0, 10 << 5)[0];
        assert!((coarse - fine).abs() < 1e-12);
    }

    #[test]
    fn increments_have_the_right_variance() {
        // Deep-level increments are assembled through many bridge splits;
        // their variance must still equal the interval length.
        for level in [0u32, 3, 7] {
            let tree = BrownianTree::new(99, 1.0, 1);
            let h = 1.0 / (1u64 << level) as f64;
            let n = 40_000u64;
            let mut sq = 0.0;
            let mut prod = 0.0;
            for i in 0..n {
                let j = i << level.min(1);
                let a = tree.increment(level, j)[0];
                sq += a * a;
                if level > 0 {
                    let b = tree.increment(level, j + 1)[0];
                    prod += a * b;
                }
            }
            let var = sq / n as f64;
            assert!((var / h - 1.0).abs() < 0.04, "level {level}: {var} vs {h}");
            assert!((prod / n as f64 / h).abs() < 0.04);
        }
    }

    #[test]
    fn seeds_and_components_are_independent_streams() {
        let a = BrownianTree::new(1, 1.0, 2).increment(2, 3);
        let b = BrownianTree::new(2, 1.0, 2).increment(2, 3);
        assert_ne!(a, b);
        assert_ne!(a[0], a[1]);
        assert_eq!(a, BrownianTree::new(1, 1.0, 2).increment(2, 3));
        assert!(BrownianTree::new(1, 1.0, 0).increment(3, 0).is_empty());
    }
}
