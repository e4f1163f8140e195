use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Oracle, ProblemConstants};
use crate::error::{input, Result};
use crate::linalg::sigma_max_sq;

/// `f(x) = μ‖x‖^p`, minimized at the origin with `f* = 0`.
///
/// Satisfies Hölder growth with exactly the constants `(μ, p)`.
#[derive(Clone, Debug)]
pub struct SyntheticHolder {
    pub mu: f64,
    pub p: f64,
    pub dim: usize,
}

impl SyntheticHolder {
    pub fn new(mu: f64, p: f64, dim: usize) -> Result<Self> {
        if !(mu > 0.0) || !(p >= 1.0) || dim == 0 {
            return input(format!("SyntheticHolder needs mu > 0, p >= 1, dim >= 1 (got {mu}, {p}, {dim})"));
        }
        Ok(SyntheticHolder { mu, p, dim })
    }

    /// Lipschitz constant on the ball of radius `r` around the minimizer.
    pub fn lipschitz_on_ball(&self, r: f64) -> f64 {
        self.mu * self.p * r.powf(self.p - 1.0)
    }
}

impl Oracle for SyntheticHolder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let r = x.norm();
        if r == 0.0 {
            return (0.0, DVector::zeros(self.dim));
        }
        let value = self.mu * r.powf(self.p);
        let g = x * (self.mu * self.p * r.powf(self.p - 2.0));
        (value, g)
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            smooth_l: (self.p == 2.0).then_some(2.0 * self.mu),
            lipschitz_m: (self.p == 1.0).then_some(self.mu),
            growth_mu: Some(self.mu),
            growth_p: Some(self.p),
            f_star: Some(0.0),
            ..Default::default()
        }
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        Some(DVector::zeros(self.dim))
    }
}

/// `f(x) = ‖Ax − b‖` with `b = A x*`, so `f* = 0`.
#[derive(Clone, Debug)]
pub struct SharpRegression {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub x_star: DVector<f64>,
    sigma_max: f64,
    sigma_min: f64,
}

impl SharpRegression {
    pub fn new(a: DMatrix<f64>, x_star: DVector<f64>) -> Result<Self> {
        if a.ncols() != x_star.len() {
            return input("SharpRegression: A and x* dimensions disagree");
        }
        let b = &a * &x_star;
        let sigma_max = sigma_max_sq(&a, 500).sqrt();
        let svd = a.clone().svd(false, false);
        let sigma_min = if a.nrows() >= a.ncols() { svd.singular_values.min() } else { 0.0 };
        Ok(SharpRegression { a, b, x_star, sigma_max, sigma_min })
    }

    /// Largest singular value of `A` (a global Lipschitz constant).
    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// Smallest singular value of `A`; the sharpness modulus when `A` has
    /// full column rank.
    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }
}

impl Oracle for SharpRegression {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let r = &self.a * x - &self.b;
        let value = r.norm();
        if value == 0.0 {
            return (0.0, DVector::zeros(self.a.ncols()));
        }
        let g = self.a.tr_mul(&r) / value;
        (value, g)
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            lipschitz_m: Some(self.sigma_max),
            growth_mu: (self.sigma_min > 0.0).then_some(self.sigma_min),
            growth_p: (self.sigma_min > 0.0).then_some(1.0),
            f_star: Some(0.0),
            ..Default::default()
        }
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        Some(self.x_star.clone())
    }
}

/// Random sharp regression instance: entries of `A` are i.i.d. Gaussian
/// with standard deviation `1/√n`, `x* ~ N(0, I)`, `b = A x*`.
pub fn make_sharp_regression(n: usize, d: usize, seed: u64) -> Result<SharpRegression> {
    if d == 0 || n < d {
        return input(format!("make_sharp_regression needs n >= d >= 1 (got n={n}, d={d})"));
    }
    let entry = Normal::new(0.0, 1.0 / (n as f64).sqrt()).expect("positive std");
    let mut rng = crate::rng::stream(seed, "sharp-regression/A");
    // Column-major fill so the draw order is fixed.
    let a = DMatrix::from_fn(n, d, |_, _| entry.sample(&mut rng));
    let mut rng = crate::rng::stream(seed, "sharp-regression/x_star");
    let std_normal = Normal::new(0.0, 1.0).expect("unit std");
    let x_star = DVector::from_fn(d, |_, _| std_normal.sample(&mut rng));
    SharpRegression::new(a, x_star)
}

/// Soft-max objective `f(x) = γ log Σᵢ exp((⟨aᵢ, x⟩ − bᵢ)/γ)`.
///
/// `a` is stored `d × n` with the `aᵢ` as columns.
#[derive(Clone, Debug)]
pub struct LogSumExp {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub gamma: f64,
    smooth_l: f64,
    shifted: bool,
}

impl LogSumExp {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, gamma: f64) -> Result<Self> {
        if a.ncols() != b.len() {
            return input("LogSumExp: number of columns of A must match len(b)");
        }
        if !(gamma > 0.0) {
            return input(format!("LogSumExp: gamma must be positive, got {gamma}"));
        }
        let smooth_l = sigma_max_sq(&a, 50) / gamma;
        Ok(LogSumExp { a, b, gamma, smooth_l, shifted: false })
    }

    /// Softmax weights `p(x)` and the value.
    fn weights(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let t = (self.a.tr_mul(x) - &self.b) / self.gamma;
        let m = t.max();
        let e = t.map(|ti| (ti - m).exp());
        let s = e.sum();
        (self.gamma * (m + s.ln()), e / s)
    }

    /// `σ_max(A)²/γ`, an upper bound on the Hessian norm.
    pub fn smoothness(&self) -> f64 {
        self.smooth_l
    }

    /// Whether the columns were shifted so that the origin is a minimizer.
    pub fn is_shifted(&self) -> bool {
        self.shifted
    }
}

impl Oracle for LogSumExp {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let (value, p) = self.weights(x);
        (value, &self.a * p)
    }

    fn constants(&self) -> ProblemConstants {
        let m = self.a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        let origin = DVector::zeros(self.dim());
        ProblemConstants {
            lipschitz_m: Some(m),
            smooth_l: Some(self.smooth_l),
            f_star: self.shifted.then(|| self.weights(&origin).0),
            ..Default::default()
        }
    }

    fn minimizer(&self) -> Option<DVector<f64>> {
        self.shifted.then(|| DVector::zeros(self.dim()))
    }
}

/// Random soft-max instance with `Â`, `b` uniform on `[-1, 1]` and columns
/// shifted by `∇f(0; Â, b)` so that `∇f(0) = 0`.
pub fn make_logsumexp(d: usize, n: usize, gamma: f64, seed: u64) -> Result<LogSumExp> {
    if d == 0 || n == 0 {
        return input("make_logsumexp needs n, d >= 1");
    }
    if !(gamma > 0.0) {
        return input(format!("make_logsumexp: gamma must be positive, got {gamma}"));
    }
    let mut rng = crate::rng::stream(seed, "logsumexp/b");
    let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
    let mut rng = crate::rng::stream(seed, "logsumexp/A");
    let a_hat = DMatrix::from_fn(d, n, |_, _| rng.random_range(-1.0..=1.0));
    let unshifted = LogSumExp::new(a_hat, b, gamma)?;
    let (_, grad0) = unshifted.evaluate(&DVector::zeros(d));
    let mut a = unshifted.a;
    for mut col in a.column_iter_mut() {
        col -= &grad0;
    }
    let mut lse = LogSumExp::new(a, unshifted.b, gamma)?;
    lse.shifted = true;
    Ok(lse)
}

/// `f(w) = (1/n) Σ max{0, 1 − yᵢ⟨w, xᵢ⟩} + (λ/2)‖w‖²`.
///
/// Rows of `x` are the data points.
#[derive(Clone, Debug)]
pub struct SvmProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub lambda: f64,
}

impl SvmProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, lambda: f64) -> Result<Self> {
        if x.nrows() != y.len() || x.nrows() == 0 {
            return input("SvmProblem: need one label per (nonempty) row");
        }
        if y.iter().any(|&v| v != 1.0 && v != -1.0) {
            return input("SvmProblem: labels must be +1 or -1");
        }
        if !(lambda > 0.0) {
            return input(format!("SvmProblem: lambda must be positive, got {lambda}"));
        }
        Ok(SvmProblem { x, y, lambda })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Margins `yᵢ⟨w, xᵢ⟩`.
    pub fn margins(&self, w: &DVector<f64>) -> DVector<f64> {
        (&self.x * w).component_mul(&self.y)
    }
}

impl Oracle for SvmProblem {
    fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn evaluate(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let n = self.n() as f64;
        let margins = self.margins(w);
        let mut hinge = 0.0;
        // Coefficients on the rows; zero at the kink (margin exactly 1).
        let coef = DVector::from_fn(self.n(), |i, _| {
            let m = margins[i];
            if m < 1.0 {
                hinge += 1.0 - m;
                -self.y[i] / n
            } else {
                0.0
            }
        });
        let value = hinge / n + 0.5 * self.lambda * w.norm_squared();
        let g = self.x.tr_mul(&coef) + w * self.lambda;
        (value, g)
    }

    fn constants(&self) -> ProblemConstants {
        // λ-strong convexity gives quadratic growth with modulus λ/2.
        ProblemConstants { growth_mu: Some(0.5 * self.lambda), growth_p: Some(2.0), ..Default::default() }
    }
}
