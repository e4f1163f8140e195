//! Subgradient oracles and the test-problem library.

mod problems;

pub use problems::{make_logsumexp, make_sharp_regression, LogSumExp, SharpRegression, SvmProblem, SyntheticHolder};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BundleError, Result};

/// Regularity constants of a problem. `None` means unknown.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub lipschitz_m: Option<f64>,
    pub smooth_l: Option<f64>,
    pub growth_mu: Option<f64>,
    pub growth_p: Option<f64>,
    pub f_star: Option<f64>,
    /// Known `dist(x₀, X*)²` for the problem's canonical start.
    pub dist0_sq: Option<f64>,
}

impl ProblemConstants {
    pub fn validate(&self) -> Result<()> {
        if self.growth_mu.is_some() && self.growth_p.is_none() {
            return Err(BundleError::Input("growth_mu set without growth_p".into()));
        }
        if let Some(mu) = self.growth_mu {
            if !(mu > 0.0) {
                return Err(BundleError::Input(format!("growth_mu must be positive, got {mu}")));
            }
        }
        if let Some(p) = self.growth_p {
            if !(p >= 1.0) {
                return Err(BundleError::Input(format!("growth_p must be >= 1, got {p}")));
            }
        }
        Ok(())
    }

    /// Fill the unknown fields from `other`, keeping everything already set.
    pub fn or(&self, other: &ProblemConstants) -> ProblemConstants {
        ProblemConstants {
            lipschitz_m: self.lipschitz_m.or(other.lipschitz_m),
            smooth_l: self.smooth_l.or(other.smooth_l),
            growth_mu: self.growth_mu.or(other.growth_mu),
            growth_p: self.growth_p.or(other.growth_p),
            f_star: self.f_star.or(other.f_star),
            dist0_sq: self.dist0_sq.or(other.dist0_sq),
        }
    }
}

/// A convex function available through a first-order black box.
///
/// Implementations must be deterministic and read-only so that several
/// solver instances can share one oracle across threads.
pub trait Oracle: Send + Sync {
    fn dim(&self) -> usize;

    /// `f(x)` and one subgradient `g ∈ ∂f(x)`. The caller guarantees
    /// `x.len() == self.dim()`; use [`eval`] or [`Evaluator`] for checked access.
    fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>);

    fn constants(&self) -> ProblemConstants {
        ProblemConstants::default()
    }

    /// A known minimizer, when the construction provides one.
    fn minimizer(&self) -> Option<DVector<f64>> {
        None
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (**self).evaluate(x)
    }
    fn constants(&self) -> ProblemConstants {
        (**self).constants()
    }
    fn minimizer(&self) -> Option<DVector<f64>> {
        (**self).minimizer()
    }
}

/// One oracle answer.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub subgradient: DVector<f64>,
}

/// Dimension-checked oracle call.
pub fn eval(oracle: &dyn Oracle, x: &DVector<f64>) -> Result<Evaluation> {
    if x.len() != oracle.dim() {
        return Err(BundleError::DimensionMismatch { expected: oracle.dim(), got: x.len() });
    }
    let (value, subgradient) = oracle.evaluate(x);
    Ok(Evaluation { value, subgradient })
}

/// Per-run wrapper that counts oracle calls.
pub struct Evaluator<'a> {
    oracle: &'a dyn Oracle,
    calls: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(oracle: &'a dyn Oracle) -> Self {
        Evaluator { oracle, calls: 0 }
    }

    pub fn eval(&mut self, x: &DVector<f64>) -> Result<Evaluation> {
        let e = eval(self.oracle, x)?;
        self.calls += 1;
        Ok(e)
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn oracle(&self) -> &'a dyn Oracle {
        self.oracle
    }
}

/// Closure-backed oracle, handy for ad-hoc functions.
pub struct FnOracle<F> {
    dim: usize,
    f: F,
    constants: ProblemConstants,
    minimizer: Option<DVector<f64>>,
}

impl<F> FnOracle<F>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnOracle { dim, f, constants: ProblemConstants::default(), minimizer: None }
    }

    pub fn with_constants(mut self, constants: ProblemConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn with_minimizer(mut self, x: DVector<f64>) -> Self {
        self.minimizer = Some(x);
        self
    }
}

impl<F> Oracle for FnOracle<F>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        (self.f)(x)
    }
    fn constants(&self) -> ProblemConstants {
        self.constants.clone()
    }
    fn minimizer(&self) -> Option<DVector<f64>> {
        self.minimizer.clone()
    }
}

/// Empirical `(M̂, L̂)` from `samples` points drawn uniformly in the cube
/// `[-radius, radius]^d`: the largest sampled subgradient norm and the
/// largest ratio `‖g(x)−g(y)‖/‖x−y‖` over consecutive sample pairs.
pub fn sample_constants(oracle: &dyn Oracle, radius: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(BundleError::Input(format!("need at least 2 samples, got {samples}")));
    }
    let d = oracle.dim();
    let mut rng = crate::rng::stream(seed, "estimate-constants");
    let mut m_hat: f64 = 0.0;
    let mut l_hat: f64 = 0.0;
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    for _ in 0..samples {
        let x = DVector::from_fn(d, |_, _| rng.random_range(-radius..=radius));
        let (_, g) = oracle.evaluate(&x);
        m_hat = m_hat.max(g.norm());
        if let Some((px, pg)) = &prev {
            let dx = (&x - px).norm();
            if dx > 0.0 {
                l_hat = l_hat.max((&g - pg).norm() / dx);
            }
        }
        prev = Some((x, g));
    }
    Ok((m_hat, l_hat))
}

/// The oracle's analytic constants, with `M` and `L` filled in empirically
/// when they are not known analytically.
pub fn estimate_constants(
    oracle: &dyn Oracle,
    region_radius: f64,
    samples: usize,
    seed: u64,
) -> Result<ProblemConstants> {
    let (m_hat, l_hat) = sample_constants(oracle, region_radius, samples, seed)?;
    let empirical = ProblemConstants { lipschitz_m: Some(m_hat), smooth_l: Some(l_hat), ..Default::default() };
    Ok(oracle.constants().or(&empirical))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_rejects_wrong_dimension() {
        let f = SyntheticHolder::new(1.0, 1.0, 3).unwrap();
        let err = eval(&f, &DVector::zeros(2)).unwrap_err();
        assert!(matches!(err, BundleError::DimensionMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn evaluator_counts_calls() {
        let f = SyntheticHolder::new(1.0, 2.0, 2).unwrap();
        let mut ev = Evaluator::new(&f);
        for _ in 0..5 {
            ev.eval(&DVector::from_element(2, 0.5)).unwrap();
        }
        assert_eq!(ev.calls(), 5);
    }

    #[test]
    fn growth_mu_requires_p() {
        let c = ProblemConstants { growth_mu: Some(1.0), ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn estimates_keep_known_constants() {
        let f = SyntheticHolder::new(2.0, 1.0, 3).unwrap();
        let known = f.constants();
        let est = estimate_constants(&f, 1.0, 50, 0).unwrap();
        assert_eq!(est.growth_mu, known.growth_mu);
        assert_eq!(est.f_star, Some(0.0));
        assert!(est.lipschitz_m.is_some());
    }

    #[test]
    fn holder_lipschitz_estimate_is_mu() {
        let f = SyntheticHolder::new(1.0, 1.0, 3).unwrap();
        let (m_hat, _) = sample_constants(&f, 1.0, 200, 3).unwrap();
        assert!((0.99..=1.0 + 1e-15).contains(&m_hat), "{m_hat}");
    }

    #[test]
    fn too_few_samples() {
        let f = SyntheticHolder::new(1.0, 1.0, 1).unwrap();
        assert!(sample_constants(&f, 1.0, 1, 0).is_err());
    }
}
