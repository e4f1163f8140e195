//! Fixtures shared by the benchmarks.

use nalgebra::DVector;
use proxbundle::harness::{make_x0, X0Spec};
use proxbundle::Cut;

/// Standard normal vector, deterministic in `seed`.
pub fn normal(d: usize, seed: u64) -> DVector<f64> {
    make_x0(&X0Spec::Normal { scale: 1.0 }, d, seed).expect("valid dimension")
}

/// `n` random cuts in dimension `d` anchored near the origin.
pub fn random_cuts(n: usize, d: usize, seed: u64) -> Vec<Cut> {
    (0..n as u64)
        .map(|i| {
            let s = seed.wrapping_mul(1000).wrapping_add(i);
            let at = normal(d, 2 * s);
            let value = normal(1, 2 * s + 1)[0];
            Cut::from_oracle(&at, value, normal(d, 2 * s + 7919))
        })
        .collect()
}
