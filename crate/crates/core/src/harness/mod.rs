//! Experiment configs, the runner behind the command line, reference
//! solves and bound verification.

pub mod config;
pub mod problem;
pub mod reference;
pub mod runner;
pub mod verify;

pub use config::{ExperimentSpec, PolicySpec, ProblemSpec, SolverMethod, SolverSpec, X0Spec};
pub use problem::{build_problem, make_x0, resolve_policy, BuiltProblem};
pub use reference::{growth_gap_bound, reference_solve, ReferenceSolution, ReferenceSource};
pub use runner::{
    execute, output_dir, output_root, run_experiment, with_seed, ExperimentResult, SolverTrace, OUTPUT_ENV,
};
pub use verify::{verify_bounds, BoundCheck, Verdict};
