//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Largest eigenvalue of `AᵀA` (i.e. `σ_max(A)²`) by power iteration.
///
/// The start vector is all ones so the result is deterministic.
pub fn sigma_max_sq(a: &DMatrix<f64>, iterations: usize) -> f64 {
    let d = a.ncols();
    if d == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = a.tr_mul(&(a * &v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = v.dot(&w);
        v = w / norm;
    }
    // Rayleigh quotient at the final iterate.
    let av = a * &v;
    estimate.max(av.norm_squared())
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        }
    }
    DVector::from_iterator(n, v.iter().map(|&x| (x - tau).max(0.0)))
}

/// `max(|a - b|) / (1 + max(|a|, |b|))`, a scale-aware closeness measure.
pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = 1.0 + a.amax().max(b.amax());
    (a - b).amax() / scale
}
