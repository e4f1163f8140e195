//! Executing experiments and writing their traces.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentSpec, ProblemSpec, SolverMethod, SolverSpec, X0Spec};
use super::problem::{build_problem, make_x0, resolve_policy, BuiltProblem, DataSource};
use super::reference::{reference_solve, ReferenceSolution, ReferenceSource};
use crate::baselines::{agd_run, gd_run, pegasos_run};
use crate::engine::{run, BundleConfig, RunStatus};
use crate::error::{BundleError, Result};
use crate::parallel::{parallel_run, ParallelConfig, ParallelTrace};
use crate::theory::parallel_parameters;
use crate::trace::RunTrace;

/// Environment variable naming the root directory for experiment output.
pub const OUTPUT_ENV: &str = "PROXBUNDLE_OUT";

/// Output root: `$PROXBUNDLE_OUT` when set, `results` otherwise.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"))
}

/// Where an experiment writes: its `output_dir` (relative paths under the
/// root) or `<root>/<name>`.
pub fn output_dir(spec: &ExperimentSpec, root: &Path) -> PathBuf {
    match &spec.output_dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => root.join(d),
        None => root.join(&spec.name),
    }
}

#[derive(Clone, Debug)]
pub enum SolverTrace {
    Serial(RunTrace),
    Parallel(ParallelTrace),
}

impl SolverTrace {
    /// The serial trace, or the best-iterate trace of a parallel run.
    pub fn main_trace(&self) -> RunTrace {
        match self {
            SolverTrace::Serial(t) => t.clone(),
            SolverTrace::Parallel(p) => p.best_trace(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub name: String,
    pub kind: String,
    /// `ok`, or `failed` with the reason in `error`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<String>,
    pub iterations: usize,
    pub descent_count: usize,
    pub null_count: usize,
    pub oracle_calls: usize,
    /// Extra calls spent on adoption in parallel runs (listed separately).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adoption_oracle_calls: Option<usize>,
    pub final_f: Option<f64>,
    pub final_gap: Option<f64>,
    pub best_gap: Option<f64>,
    pub stop_reason: String,
    pub wall_time_secs: f64,
    /// Resolved solver parameters (stepsize policy, ladder, step length).
    pub parameters: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub seed: u64,
    pub beta: f64,
    pub x0: X0Spec,
    pub problem: ProblemSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_source: Option<DataSource>,
    pub dim: usize,
    pub f_x0: f64,
    pub reference: Option<ReferenceSolution>,
    pub solvers: Vec<SolverReport>,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub report: SolverReport,
    pub trace: Option<SolverTrace>,
}

pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub problem: BuiltProblem,
    pub x0: DVector<f64>,
    pub summary: ExperimentSummary,
    pub results: Vec<SolverResult>,
}

impl ExperimentResult {
    pub fn result(&self, name: &str) -> Option<&SolverResult> {
        self.results.iter().find(|r| r.report.name == name)
    }

    pub fn trace(&self, name: &str) -> Option<&SolverTrace> {
        self.result(name).and_then(|r| r.trace.as_ref())
    }
}

/// The experiment with its seed replaced.
pub fn with_seed(spec: &ExperimentSpec, seed: u64) -> ExperimentSpec {
    ExperimentSpec { seed, ..spec.clone() }
}

/// Resolve `f*`: given in the config, analytic, or from a reference solve.
pub fn resolve_reference(
    spec: &ExperimentSpec,
    problem: &BuiltProblem,
    x0: &DVector<f64>,
) -> Result<ReferenceSolution> {
    if let Some(f) = spec.f_star {
        return Ok(ReferenceSolution {
            f_star: f,
            source: ReferenceSource::Given,
            certified: false,
            gap_bound: None,
            iterations: 0,
            oracle_calls: 0,
            agg_norm: None,
            stop: "given".into(),
        });
    }
    reference_solve(problem.oracle(), x0, &spec.reference)
}

/// Run every solver of a single (non-sweep) experiment in memory.
pub fn execute(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let start = Instant::now();
    let (problem, source) = build_problem(&spec.problem, spec.seed)?;
    let x0_spec = spec.x0.clone().unwrap_or_else(|| problem.default_x0());
    let x0 = make_x0(&x0_spec, problem.dim(), spec.seed)?;
    let f_x0 = problem.oracle().evaluate(&x0).0;
    let reference = resolve_reference(spec, &problem, &x0)?;
    let f_star = Some(reference.f_star);

    let results: Vec<SolverResult> = spec
        .solvers
        .par_iter()
        .map(|s| {
            let r = run_solver(spec, s, &problem, &x0, f_x0, f_star);
            match &r.report.error {
                None => log::info!(
                    "{}/{}: best gap {:?} after {} oracle calls",
                    spec.name,
                    s.name,
                    r.report.best_gap,
                    r.report.oracle_calls
                ),
                Some(e) => log::warn!("{}/{}: failed: {e}", spec.name, s.name),
            }
            r
        })
        .collect();

    let summary = ExperimentSummary {
        name: spec.name.clone(),
        seed: spec.seed,
        beta: spec.beta,
        x0: x0_spec,
        problem: spec.problem.clone(),
        dataset: problem.dataset.clone(),
        data_source: source,
        dim: problem.dim(),
        f_x0,
        reference: Some(reference),
        solvers: results.iter().map(|r| r.report.clone()).collect(),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(ExperimentResult { spec: spec.clone(), problem, x0, summary, results })
}

fn failed(spec: &SolverSpec, err: &BundleError, parameters: serde_json::Value) -> SolverResult {
    SolverResult {
        report: SolverReport {
            name: spec.name.clone(),
            kind: spec.method.kind().into(),
            status: "failed".into(),
            error: Some(err.to_string()),
            files: Vec::new(),
            iterations: 0,
            descent_count: 0,
            null_count: 0,
            oracle_calls: 0,
            adoption_oracle_calls: None,
            final_f: None,
            final_gap: None,
            best_gap: None,
            stop_reason: "error".into(),
            wall_time_secs: 0.0,
            parameters,
        },
        trace: None,
    }
}

fn report_for(spec: &SolverSpec, trace: &RunTrace, status: &RunStatus, parameters: serde_json::Value) -> SolverReport {
    let last = trace.records.last();
    let (status, error) = match status {
        RunStatus::Stopped(_) => ("ok".to_string(), None),
        RunStatus::Failed(msg) => ("failed".to_string(), Some(msg.clone())),
    };
    SolverReport {
        name: spec.name.clone(),
        kind: spec.method.kind().into(),
        status,
        error,
        files: vec![format!("{}.csv", spec.name)],
        iterations: trace.summary.iterations,
        descent_count: trace.summary.descent_count,
        null_count: trace.summary.null_count,
        oracle_calls: trace.summary.oracle_calls,
        adoption_oracle_calls: None,
        final_f: last.map(|r| r.f),
        final_gap: last.and_then(|r| r.gap),
        best_gap: trace.summary.best_gap,
        stop_reason: trace.summary.stop_reason.clone(),
        wall_time_secs: trace.summary.wall_time_secs,
        parameters,
    }
}

fn gradient_step(problem: &BuiltProblem, step: Option<f64>, scale: f64) -> Result<f64> {
    match step {
        Some(s) => Ok(s),
        None => problem
            .constants()
            .smooth_l
            .map(|l| scale / l)
            .ok_or(BundleError::MissingConstant { constant: "L", requirement: "a gradient step of step_scale/L" }),
    }
}

fn run_solver(
    exp: &ExperimentSpec,
    spec: &SolverSpec,
    problem: &BuiltProblem,
    x0: &DVector<f64>,
    f_x0: f64,
    f_star: Option<f64>,
) -> SolverResult {
    let oracle = problem.oracle();
    let ok = |trace: RunTrace, params: serde_json::Value| {
        let status = RunStatus::Stopped(crate::engine::StopReason::MaxIterations);
        let report = report_for(spec, &trace, &status, params);
        SolverResult { report, trace: Some(SolverTrace::Serial(trace)) }
    };
    match &spec.method {
        SolverMethod::Bundle { policy, model, iterations, beta, target_gap } => {
            let policy = match resolve_policy(policy, problem, x0, f_star) {
                Ok(p) => p,
                Err(e) => return failed(spec, &e, serde_json::Value::Null),
            };
            let params = serde_json::json!({ "policy": policy, "model": model });
            let mut config = BundleConfig::new(policy)
                .with_model(*model)
                .with_beta(beta.unwrap_or(exp.beta))
                .with_max_iterations(iterations.unwrap_or(exp.iterations));
            if let Some(f) = f_star {
                config = config.with_f_star(f);
            }
            if let Some(eps) = target_gap {
                config = config.with_target_gap(*eps);
            }
            match run(oracle, &config, x0.clone()) {
                Ok(out) => {
                    let report = report_for(spec, &out.trace, &out.status, params);
                    SolverResult { report, trace: Some(SolverTrace::Serial(out.trace)) }
                }
                Err(e) => failed(spec, &e, params),
            }
        }
        SolverMethod::Parallel {
            rho_bar,
            instances,
            ratio,
            eps,
            rounds,
            beta,
            model,
            fan_out,
            adoption,
            target_gap,
        } => {
            let ladder = match (rho_bar, instances) {
                (Some(r), Some(j)) => Ok((*r, *j, *ratio)),
                _ => {
                    let c = problem.constants();
                    match (c.growth_mu, c.growth_p, eps, f_star) {
                        (Some(mu), Some(p), Some(eps), Some(fs)) => parallel_parameters(mu, p, *eps, f_x0 - fs)
                            .map(|(r, j)| (rho_bar.unwrap_or(r), instances.unwrap_or(j), 2.0)),
                        _ => Err(BundleError::MissingConstant {
                            constant: "mu, p, f*",
                            requirement: "deriving the parallel stepsize ladder",
                        }),
                    }
                }
            };
            let (rho_bar, instances, ratio) = match ladder {
                Ok(l) => l,
                Err(e) => return failed(spec, &e, serde_json::Value::Null),
            };
            let mut config = ParallelConfig::new(rho_bar, instances)
                .with_ratio(ratio)
                .with_beta(beta.unwrap_or(exp.beta))
                .with_max_iterations(rounds.unwrap_or(exp.iterations))
                .with_fan_out(*fan_out)
                .with_adoption(*adoption);
            config.model = *model;
            if let Some(f) = f_star {
                config = config.with_f_star(f);
            }
            if let Some(eps) = target_gap {
                config = config.with_target_gap(*eps);
            }
            let params = serde_json::json!({
                "rho_bar": rho_bar, "instances": instances, "ratio": ratio, "model": model, "adoption": adoption,
            });
            match parallel_run(oracle, &config, x0.clone()) {
                Ok(out) => {
                    let best = out.trace.best_trace();
                    let mut report = report_for(spec, &best, &out.status, params);
                    let s = &out.trace.summary;
                    report.files.push(format!("{}_instances.csv", spec.name));
                    report.iterations = s.rounds;
                    report.descent_count = s.descent_count;
                    report.null_count = s.null_count;
                    report.oracle_calls = s.oracle_calls;
                    report.adoption_oracle_calls = Some(s.adoption_oracle_calls);
                    report.wall_time_secs = s.wall_time_secs;
                    SolverResult { report, trace: Some(SolverTrace::Parallel(out.trace)) }
                }
                Err(e) => failed(spec, &e, params),
            }
        }
        SolverMethod::Pegasos { iterations } => {
            let Some(svm) = problem.svm() else {
                return failed(
                    spec,
                    &BundleError::Input("pegasos needs an svm problem".into()),
                    serde_json::Value::Null,
                );
            };
            let n = iterations.unwrap_or(exp.iterations);
            match pegasos_run(svm, n, x0.clone(), f_star) {
                Ok(t) => ok(t, serde_json::json!({ "iterations": n })),
                Err(e) => failed(spec, &e, serde_json::Value::Null),
            }
        }
        SolverMethod::Gd { step, step_scale, iterations } | SolverMethod::Agd { step, step_scale, iterations } => {
            let step = match gradient_step(problem, *step, *step_scale) {
                Ok(s) => s,
                Err(e) => return failed(spec, &e, serde_json::Value::Null),
            };
            let n = iterations.unwrap_or(exp.iterations);
            let res = if matches!(spec.method, SolverMethod::Gd { .. }) {
                gd_run(oracle, step, n, x0.clone(), f_star)
            } else {
                agd_run(oracle, step, n, x0.clone(), f_star)
            };
            match res {
                Ok(t) => ok(t, serde_json::json!({ "step": step })),
                Err(e) => failed(spec, &e, serde_json::json!({ "step": step })),
            }
        }
    }
}

/// Write one CSV per solver (two for parallel runs) and `summary.json`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for r in &result.results {
        match &r.trace {
            Some(SolverTrace::Serial(t)) => t.save_csv(&dir.join(format!("{}.csv", r.report.name)))?,
            Some(SolverTrace::Parallel(p)) => p.save_csv(
                &dir.join(format!("{}_instances.csv", r.report.name)),
                &dir.join(format!("{}.csv", r.report.name)),
            )?,
            None => {}
        }
    }
    let json = serde_json::to_string_pretty(&result.summary)?;
    std::fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

/// Run an experiment (every sweep value, if any) and write its outputs.
/// Sweep values go to `lambda=<value>` subdirectories.
pub fn run_experiment(spec: &ExperimentSpec, dir: &Path) -> Result<Vec<ExperimentSummary>> {
    spec.validate()?;
    match &spec.sweep {
        None => {
            let result = execute(spec)?;
            write_outputs(&result, dir)?;
            Ok(vec![result.summary])
        }
        Some(sweep) => {
            let mut out = Vec::new();
            for &lambda in &sweep.lambda {
                let sub = spec.with_lambda(lambda);
                let result = execute(&sub)?;
                write_outputs(&result, &dir.join(format!("lambda={lambda:e}")))?;
                out.push(result.summary);
            }
            let table = serde_json::to_string_pretty(&out)?;
            std::fs::write(dir.join("sweep.json"), table + "\n")?;
            Ok(out)
        }
    }
}
