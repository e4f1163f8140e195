//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::DEFAULT_BETA;
use crate::error::{input, BundleError, Result};
use crate::model::ModelStrategy;
use crate::parallel::AdoptionRule;
use crate::theory::BoundForm;

fn default_beta() -> f64 {
    DEFAULT_BETA
}

fn default_iterations() -> usize {
    1000
}

fn default_ratio() -> f64 {
    2.0
}

fn default_step_scale() -> f64 {
    0.9
}

fn default_scale() -> f64 {
    1.0
}

fn default_model() -> ModelStrategy {
    ModelStrategy::TwoCut
}

/// One experiment: a problem, a starting point and a list of solvers.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSpec,
    /// Starting point; defaults depend on the problem family.
    #[serde(default)]
    pub x0: Option<X0Spec>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Default budget for solvers that do not set their own.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Known optimal value; skips the reference solve.
    #[serde(default)]
    pub f_star: Option<f64>,
    #[serde(default)]
    pub reference: ReferenceOptions,
    pub solvers: Vec<SolverSpec>,
    /// Repeat the experiment for each listed parameter value.
    #[serde(default)]
    pub sweep: Option<Sweep>,
    /// Relative paths are resolved against the output root.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub verify: Option<VerifySpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `μ‖x‖^p`.
    SyntheticHolder {
        mu: f64,
        p: f64,
        dim: usize,
    },
    SharpRegression {
        n: usize,
        d: usize,
    },
    Logsumexp {
        d: usize,
        n: usize,
        gamma: f64,
    },
    Svm {
        lambda: f64,
        data: SvmData,
    },
}

/// A LIBSVM file, a synthetic stand-in, or a file with a synthetic fallback
/// used when the file is absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmData {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticData>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub flip: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum X0Spec {
    Zeros,
    /// `N(0, scale²·I)` drawn from the experiment seed.
    Normal {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    Constant {
        value: f64,
    },
    Point {
        values: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceOptions {
    /// Stepsize of the full-memory reference run; defaults to twice the
    /// quadratic-growth modulus when known, else 1.
    pub rho: Option<f64>,
    pub max_iterations: usize,
    /// Aggregate-norm stopping tolerance.
    pub agg_tol: f64,
    /// Stop once the certified gap bound falls below this.
    pub gap_tol: f64,
    pub capacity: Option<usize>,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        ReferenceOptions { rho: None, max_iterations: 5000, agg_tol: 1e-10, gap_tol: 1e-10, capacity: Some(200) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// SVM regularization values.
    pub lambda: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub eps: Vec<f64>,
    #[serde(default = "default_form")]
    pub form: BoundForm,
}

fn default_form() -> BoundForm {
    BoundForm::Simplified
}

/// A named solver entry. The name is also the CSV file stem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub name: String,
    #[serde(flatten)]
    pub method: SolverMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverMethod {
    Bundle {
        policy: PolicySpec,
        #[serde(default = "default_model")]
        model: ModelStrategy,
        #[serde(default)]
        iterations: Option<usize>,
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default)]
        target_gap: Option<f64>,
    },
    Parallel {
        /// Explicit ladder; when absent, derived from the growth constants
        /// and `eps`.
        #[serde(default)]
        rho_bar: Option<f64>,
        #[serde(default)]
        instances: Option<usize>,
        #[serde(default = "default_ratio")]
        ratio: f64,
        #[serde(default)]
        eps: Option<f64>,
        #[serde(default)]
        rounds: Option<usize>,
        #[serde(default)]
        beta: Option<f64>,
        #[serde(default = "default_model")]
        model: ModelStrategy,
        #[serde(default)]
        fan_out: bool,
        #[serde(default)]
        adoption: AdoptionRule,
        #[serde(default)]
        target_gap: Option<f64>,
    },
    Pegasos {
        #[serde(default)]
        iterations: Option<usize>,
    },
    Gd {
        #[serde(default)]
        step: Option<f64>,
        /// Step is `step_scale / L` when `step` is absent.
        #[serde(default = "default_step_scale")]
        step_scale: f64,
        #[serde(default)]
        iterations: Option<usize>,
    },
    Agd {
        #[serde(default)]
        step: Option<f64>,
        #[serde(default = "default_step_scale")]
        step_scale: f64,
        #[serde(default)]
        iterations: Option<usize>,
    },
}

impl SolverMethod {
    pub fn kind(&self) -> &'static str {
        match self {
            SolverMethod::Bundle { .. } => "bundle",
            SolverMethod::Parallel { .. } => "parallel",
            SolverMethod::Pegasos { .. } => "pegasos",
            SolverMethod::Gd { .. } => "gd",
            SolverMethod::Agd { .. } => "agd",
        }
    }
}

/// Stepsize policy as written in a config. Missing constants are taken
/// from the problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Constant {
        rho: f64,
    },
    Ideal,
    OptGeneral {
        #[serde(default)]
        d_sq: Option<f64>,
    },
    OptHolder {
        #[serde(default)]
        mu: Option<f64>,
        #[serde(default)]
        p: Option<f64>,
        /// Multiplies μ; used to study misspecified constants.
        #[serde(default = "default_scale")]
        mu_scale: f64,
    },
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            BundleError::Json(j) => BundleError::Parse(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return input("experiment name must not be empty");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return input(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.iterations == 0 {
            return input("iterations must be positive");
        }
        if self.solvers.is_empty() {
            return input("experiment lists no solvers");
        }
        let mut names: Vec<&str> = self.solvers.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return input(format!("duplicate solver name {:?}", w[0]));
        }
        for s in &self.solvers {
            s.validate(self)?;
        }
        if let Some(sweep) = &self.sweep {
            if !matches!(self.problem, ProblemSpec::Svm { .. }) {
                return input("a lambda sweep needs an svm problem");
            }
            if sweep.lambda.is_empty() || sweep.lambda.iter().any(|l| !(*l > 0.0)) {
                return input("sweep lambdas must be positive and nonempty");
            }
        }
        if let ProblemSpec::Svm { data, .. } = &self.problem {
            if data.path.is_none() && data.synthetic.is_none() {
                return input("svm data needs a path or a synthetic stand-in");
            }
        }
        if let Some(v) = &self.verify {
            if v.eps.is_empty() || v.eps.iter().any(|e| !(*e > 0.0)) {
                return input("verify.eps must be positive and nonempty");
            }
        }
        Ok(())
    }

    /// The experiment with the problem's λ replaced.
    pub fn with_lambda(&self, lambda: f64) -> ExperimentSpec {
        let mut out = self.clone();
        if let ProblemSpec::Svm { lambda: l, .. } = &mut out.problem {
            *l = lambda;
        }
        out.sweep = None;
        out
    }
}

impl SolverSpec {
    fn validate(&self, exp: &ExperimentSpec) -> Result<()> {
        let bad_name = self.name.is_empty()
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.');
        if bad_name {
            return input(format!("solver name {:?} must be a plain file stem", self.name));
        }
        let positive = |v: Option<usize>, what: &str| match v {
            Some(0) => input(format!("solver {}: {what} must be positive", self.name)),
            _ => Ok(()),
        };
        match &self.method {
            SolverMethod::Bundle { iterations, model, .. } => {
                positive(*iterations, "iterations")?;
                model.validate()?;
            }
            SolverMethod::Parallel { rho_bar, instances, eps, rounds, .. } => {
                positive(*rounds, "rounds")?;
                if (rho_bar.is_none() || instances.is_none()) && eps.is_none() {
                    return input(format!("solver {}: give rho_bar and instances, or eps to derive them", self.name));
                }
            }
            SolverMethod::Pegasos { iterations } => {
                positive(*iterations, "iterations")?;
                if !matches!(exp.problem, ProblemSpec::Svm { .. }) {
                    return input(format!("solver {}: pegasos needs an svm problem", self.name));
                }
            }
            SolverMethod::Gd { iterations, .. } | SolverMethod::Agd { iterations, .. } => {
                positive(*iterations, "iterations")?;
            }
        }
        Ok(())
    }
}
