//! Proximal bundle methods for nonsmooth convex minimization.

pub mod baselines;
pub mod dataset;
pub mod engine;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod prox;
pub mod rng;
pub mod theory;
pub mod trace;

pub use baselines::{agd_run, gd_run, pegasos_run};
pub use dataset::Dataset;
pub use engine::{
    bundle_step, compute_rho, run, theoretical_d_sq, BundleConfig, BundleState, RunOutcome, RunStatus, StepOutcome,
    StepsizePolicy, StopReason,
};
pub use error::{BundleError, Result};
pub use harness::{execute, run_experiment, ExperimentSpec};
pub use model::{Cut, CutModel, CutOrigin, ModelStrategy};
pub use oracle::{
    Evaluation, Evaluator, FnOracle, LogSumExp, Oracle, ProblemConstants, SharpRegression, SvmProblem, SyntheticHolder,
};
pub use parallel::{parallel_run, AdoptionRule, ParallelConfig, ParallelTrace};
pub use prox::{prox_model, ProxPath, ProxResult, SolveStatus};
pub use theory::{BoundForm, StepBounds};
pub use trace::{RunSummary, RunTrace, StepKind, TraceRecord};
