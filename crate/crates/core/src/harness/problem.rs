//! Turning a [`ProblemSpec`] into an oracle, a starting point and policies.

use nalgebra::DVector;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{PolicySpec, ProblemSpec, X0Spec};
use crate::dataset::{load_libsvm, preprocess, synthetic_classification};
use crate::engine::StepsizePolicy;
use crate::error::{input, BundleError, Result};
use crate::oracle::{make_logsumexp, make_sharp_regression, LogSumExp, SharpRegression, SvmProblem, SyntheticHolder};
use crate::oracle::{Oracle, ProblemConstants};

#[derive(Clone, Debug)]
pub enum Problem {
    Holder(SyntheticHolder),
    Sharp(SharpRegression),
    Lse(LogSumExp),
    Svm(SvmProblem),
}

/// A constructed problem instance.
#[derive(Clone, Debug)]
pub struct BuiltProblem {
    pub problem: Problem,
    /// Dataset name for SVM problems.
    pub dataset: Option<String>,
}

/// Where the data of an SVM problem came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    File,
    Synthetic,
}

impl BuiltProblem {
    pub fn oracle(&self) -> &dyn Oracle {
        match &self.problem {
            Problem::Holder(p) => p,
            Problem::Sharp(p) => p,
            Problem::Lse(p) => p,
            Problem::Svm(p) => p,
        }
    }

    pub fn svm(&self) -> Option<&SvmProblem> {
        match &self.problem {
            Problem::Svm(p) => Some(p),
            _ => None,
        }
    }

    pub fn dim(&self) -> usize {
        self.oracle().dim()
    }

    pub fn constants(&self) -> ProblemConstants {
        self.oracle().constants()
    }

    /// A bound on subgradient norms over `{f ≤ f(x0)}`, when one is known.
    pub fn level_set_lipschitz(&self, x0: &DVector<f64>) -> Option<f64> {
        match &self.problem {
            // The level set of μ‖x‖^p through x0 is the ball of radius ‖x0‖.
            Problem::Holder(h) => Some(h.lipschitz_on_ball(x0.norm())),
            _ => self.constants().lipschitz_m,
        }
    }

    /// The starting point used when a config gives none.
    pub fn default_x0(&self) -> X0Spec {
        match &self.problem {
            Problem::Svm(_) => X0Spec::Zeros,
            // Zero is the minimizer of every shifted log-sum-exp instance.
            _ => X0Spec::Normal { scale: 1.0 },
        }
    }
}

/// Build the problem. SVM data comes from the file when it exists and from
/// the synthetic stand-in otherwise.
pub fn build_problem(spec: &ProblemSpec, seed: u64) -> Result<(BuiltProblem, Option<DataSource>)> {
    let built = match spec {
        ProblemSpec::SyntheticHolder { mu, p, dim } => {
            (BuiltProblem { problem: Problem::Holder(SyntheticHolder::new(*mu, *p, *dim)?), dataset: None }, None)
        }
        ProblemSpec::SharpRegression { n, d } => {
            (BuiltProblem { problem: Problem::Sharp(make_sharp_regression(*n, *d, seed)?), dataset: None }, None)
        }
        ProblemSpec::Logsumexp { d, n, gamma } => {
            (BuiltProblem { problem: Problem::Lse(make_logsumexp(*d, *n, *gamma, seed)?), dataset: None }, None)
        }
        ProblemSpec::Svm { lambda, data } => {
            let from_file = data.path.as_ref().filter(|p| p.exists());
            let (ds, source) = match (from_file, &data.synthetic) {
                (Some(path), _) => (preprocess(&load_libsvm(path)?), DataSource::File),
                (None, Some(s)) => (synthetic_classification(s.n, s.d, s.flip, seed)?, DataSource::Synthetic),
                (None, None) => {
                    let shown = data.path.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
                    return input(format!("dataset {shown} not found and no synthetic stand-in configured"));
                }
            };
            let svm = ds.svm(*lambda)?;
            (BuiltProblem { problem: Problem::Svm(svm), dataset: Some(ds.name.clone()) }, Some(source))
        }
    };
    Ok(built)
}

pub fn make_x0(spec: &X0Spec, dim: usize, seed: u64) -> Result<DVector<f64>> {
    match spec {
        X0Spec::Zeros => Ok(DVector::zeros(dim)),
        X0Spec::Constant { value } => Ok(DVector::from_element(dim, *value)),
        X0Spec::Normal { scale } => {
            let normal = Normal::new(0.0, *scale).map_err(|e| BundleError::Input(format!("x0 scale {scale}: {e}")))?;
            let mut rng = crate::rng::stream(seed, "x0");
            Ok(DVector::from_fn(dim, |_, _| normal.sample(&mut rng)))
        }
        X0Spec::Point { values } => {
            if values.len() != dim {
                return Err(BundleError::DimensionMismatch { expected: dim, got: values.len() });
            }
            Ok(DVector::from_column_slice(values))
        }
    }
}

const POLICY: &str = "the configured stepsize policy";

fn need_f_star(f_star: Option<f64>) -> Result<f64> {
    f_star.ok_or(BundleError::MissingConstant { constant: "f*", requirement: POLICY })
}

fn need_minimizer(problem: &BuiltProblem) -> Result<DVector<f64>> {
    problem.oracle().minimizer().ok_or(BundleError::MissingConstant { constant: "x*", requirement: POLICY })
}

/// Fill the policy's missing constants from the problem.
pub fn resolve_policy(
    spec: &PolicySpec,
    problem: &BuiltProblem,
    x0: &DVector<f64>,
    f_star: Option<f64>,
) -> Result<StepsizePolicy> {
    let c = problem.constants();
    let policy = match spec {
        PolicySpec::Constant { rho } => StepsizePolicy::Constant { rho: *rho },
        PolicySpec::Ideal => StepsizePolicy::Ideal { f_star: need_f_star(f_star)?, x_star: need_minimizer(problem)? },
        PolicySpec::OptGeneral { d_sq } => {
            let d_sq = match d_sq {
                Some(d) => *d,
                None => (x0 - need_minimizer(problem)?).norm_squared(),
            };
            StepsizePolicy::OptGeneral { d_sq, f_star: need_f_star(f_star)? }
        }
        PolicySpec::OptHolder { mu, p, mu_scale } => {
            let mu = mu.or(c.growth_mu).ok_or(BundleError::MissingConstant { constant: "mu", requirement: POLICY })?;
            let p = p.or(c.growth_p).ok_or(BundleError::MissingConstant { constant: "p", requirement: POLICY })?;
            StepsizePolicy::OptHolder { mu: mu * mu_scale, p, f_star: need_f_star(f_star)? }
        }
    };
    policy.validate()?;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{SvmData, SyntheticData};

    #[test]
    fn x0_is_seeded() {
        let spec = X0Spec::Normal { scale: 1.0 };
        assert_eq!(make_x0(&spec, 4, 9).unwrap(), make_x0(&spec, 4, 9).unwrap());
        assert_ne!(make_x0(&spec, 4, 9).unwrap(), make_x0(&spec, 4, 10).unwrap());
        assert!(make_x0(&X0Spec::Point { values: vec![1.0] }, 2, 0).is_err());
    }

    #[test]
    fn holder_policy_scales_mu() {
        let (p, _) = build_problem(&ProblemSpec::SyntheticHolder { mu: 2.0, p: 1.0, dim: 3 }, 0).unwrap();
        let x0 = DVector::from_element(3, 1.0);
        let spec = PolicySpec::OptHolder { mu: None, p: None, mu_scale: 3.0 };
        match resolve_policy(&spec, &p, &x0, Some(0.0)).unwrap() {
            StepsizePolicy::OptHolder { mu, p, f_star } => {
                assert_eq!((mu, p, f_star), (6.0, 1.0, 0.0));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(resolve_policy(&PolicySpec::Ideal, &p, &x0, None).is_err());
    }

    #[test]
    fn missing_dataset_falls_back_to_synthetic() {
        let data = SvmData {
            path: Some("/nonexistent/duke.libsvm".into()),
            synthetic: Some(SyntheticData { n: 20, d: 4, flip: 0.0 }),
        };
        let (p, src) = build_problem(&ProblemSpec::Svm { lambda: 0.1, data }, 1).unwrap();
        assert_eq!(src, Some(DataSource::Synthetic));
        assert!(p.svm().is_some());
        let data = SvmData { path: Some("/nonexistent/duke.libsvm".into()), synthetic: None };
        assert!(build_problem(&ProblemSpec::Svm { lambda: 0.1, data }, 1).is_err());
    }
}
