//! Comparing observed step counts with the theoretical ceilings.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentSpec, SolverMethod};
use super::problem::{BuiltProblem, Problem};
use super::runner::{execute, ExperimentResult, SolverTrace};
use crate::engine::{theoretical_d_sq, StepsizePolicy};
use crate::error::{BundleError, Result};
use crate::parallel::ParallelTrace;
use crate::theory::{
    bound_adaptive_step, bound_constant_step, AdaptiveRegime, BoundForm, Continuity, Growth, RateInputs, StepBounds,
};
use crate::trace::{RunTrace, StepKind};

/// Accuracies checked when a config gives none.
pub const DEFAULT_EPS: [f64; 3] = [1e-2, 1e-4, 1e-6];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Skip => "SKIP",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub solver: String,
    pub regime: String,
    pub eps: f64,
    pub verdict: Verdict,
    pub descents: usize,
    pub nulls: usize,
    pub descent_bound: Option<f64>,
    pub null_bound: Option<f64>,
    pub note: String,
}

impl fmt::Display for BoundCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} [{}] eps={:e}", self.verdict, self.solver, self.regime, self.eps)?;
        if let (Some(d), Some(n)) = (self.descent_bound, self.null_bound) {
            write!(f, " descents {}/{:.4e} nulls {}/{:.4e}", self.descents, d, self.nulls, n)?;
        }
        if !self.note.is_empty() {
            write!(f, " ({})", self.note)?;
        }
        Ok(())
    }
}

/// Descent and null steps taken before the first record with gap ≤ eps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub descents: usize,
    pub nulls: usize,
    /// Steps (or rounds) taken before reaching eps, or in total.
    pub steps: usize,
    pub reached: bool,
}

pub fn counts_until(trace: &RunTrace, eps: f64) -> StepCounts {
    let mut c = StepCounts::default();
    for r in &trace.records {
        match r.step_type {
            StepKind::Descent => c.descents += 1,
            StepKind::Null => c.nulls += 1,
            StepKind::Step | StepKind::Init => {}
        }
        if r.step_type != StepKind::Init {
            c.steps += 1;
        }
        if r.gap.is_some_and(|g| g <= eps) {
            c.reached = true;
            break;
        }
    }
    c
}

/// Rounds of a parallel run before the best gap reaches eps.
pub fn rounds_until(trace: &ParallelTrace, eps: f64) -> StepCounts {
    let mut c = StepCounts::default();
    for r in &trace.best {
        if r.round > 0 {
            c.steps += 1;
        }
        if r.best_gap.is_some_and(|g| g <= eps) {
            c.reached = true;
            break;
        }
    }
    c
}

/// Problem data the ceilings need.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundContext {
    pub m: Option<f64>,
    pub l: Option<f64>,
    pub mu: Option<f64>,
    pub p: Option<f64>,
    pub gap0: f64,
    pub dist0_sq: Option<f64>,
    /// `sup{dist(x, X*)² : f(x) ≤ f(x₀)}` when known.
    pub level_dist_sq: Option<f64>,
    pub beta: f64,
}

impl BoundContext {
    pub fn from_problem(
        problem: &BuiltProblem,
        x0: &nalgebra::DVector<f64>,
        f_x0: f64,
        f_star: f64,
        beta: f64,
    ) -> Self {
        let c = problem.constants();
        let dist0_sq = problem.oracle().minimizer().map(|xs| (x0 - xs).norm_squared());
        let level_dist_sq = match &problem.problem {
            Problem::Holder(_) => dist0_sq,
            _ => None,
        };
        BoundContext {
            m: problem.level_set_lipschitz(x0),
            l: c.smooth_l,
            mu: c.growth_mu,
            p: c.growth_p,
            gap0: f_x0 - f_star,
            dist0_sq,
            level_dist_sq,
            beta,
        }
    }

    fn inputs(&self, eps: f64) -> RateInputs {
        RateInputs { m: self.m, l: self.l, mu: self.mu, p: self.p, ..RateInputs::new(self.beta, eps, self.gap0) }
    }

    /// A valid `sup_k dist(x_k, X*)²` for a constant stepsize.
    fn constant_d_sq(&self, rho: f64) -> Option<f64> {
        let run = self.dist0_sq.map(|d| theoretical_d_sq(d, self.gap0.max(0.0), self.beta, rho));
        match (run, self.level_dist_sq) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

fn judge(solver: &str, regime: &str, eps: f64, counts: StepCounts, bounds: Result<StepBounds>) -> BoundCheck {
    let mut check = BoundCheck {
        solver: solver.to_string(),
        regime: regime.to_string(),
        eps,
        verdict: Verdict::Skip,
        descents: counts.descents,
        nulls: counts.nulls,
        descent_bound: None,
        null_bound: None,
        note: String::new(),
    };
    let b = match bounds {
        Ok(b) => b,
        Err(BundleError::Precondition(msg)) => {
            check.note = format!("vacuous: {msg}");
            return check;
        }
        Err(e) => {
            if matches!(e, BundleError::MissingConstant { .. }) {
                log::warn!("{solver} [{regime}]: skipped, {e}");
            }
            check.note = e.to_string();
            return check;
        }
    };
    check.descent_bound = Some(b.descent_bound);
    check.null_bound = Some(b.null_bound);
    let within = counts.descents as f64 <= b.descent_bound && counts.nulls as f64 <= b.null_bound;
    check.verdict = if !within {
        Verdict::Fail
    } else if counts.reached {
        Verdict::Pass
    } else if counts.steps as f64 >= b.total {
        check.note = "eps not reached within the bound".into();
        Verdict::Fail
    } else {
        check.note = "budget ended before eps; counts within bounds so far".into();
        Verdict::Skip
    };
    check
}

/// Rounds-based check for parallel runs.
fn judge_rounds(solver: &str, eps: f64, counts: StepCounts, bounds: Result<StepBounds>) -> BoundCheck {
    let mut check = judge(solver, "parallel", eps, StepCounts { descents: 0, nulls: 0, ..counts }, bounds);
    if let (Some(d), Some(n)) = (check.descent_bound, check.null_bound) {
        check.descents = counts.steps;
        check.nulls = 0;
        check.descent_bound = Some(d + n);
        check.null_bound = Some(0.0);
        let total = d + n;
        check.verdict = if (counts.steps as f64) > total || (!counts.reached && counts.steps as f64 >= total) {
            check.note = "rounds exceed the bound".into();
            Verdict::Fail
        } else if counts.reached {
            check.note = "rounds counted as descents".into();
            Verdict::Pass
        } else {
            check.note = "budget ended before eps".into();
            Verdict::Skip
        };
    }
    check
}

/// Checks for one serial run under every regime its policy and the known
/// constants support.
pub fn check_serial(
    solver: &str,
    policy: &StepsizePolicy,
    trace: &RunTrace,
    ctx: &BoundContext,
    eps: f64,
    form: BoundForm,
) -> Vec<BoundCheck> {
    let counts = counts_until(trace, eps);
    let mut out = Vec::new();
    match policy {
        StepsizePolicy::Constant { rho } => {
            let mut inp = ctx.inputs(eps);
            inp.rho = Some(*rho);
            inp.d_sq = ctx.constant_d_sq(*rho);
            for (cont, cname) in [(Continuity::Lipschitz, "lipschitz"), (Continuity::Smooth, "smooth")] {
                let available = match cont {
                    Continuity::Lipschitz => ctx.m.is_some(),
                    Continuity::Smooth => ctx.l.is_some(),
                };
                if !available {
                    continue;
                }
                for (growth, gname) in [(Growth::None, ""), (Growth::Holder, "+growth")] {
                    let regime = format!("constant/{cname}{gname}");
                    out.push(judge(solver, &regime, eps, counts, bound_constant_step(&inp, cont, growth, form)));
                }
            }
            if out.is_empty() {
                let mut c = judge(
                    solver,
                    "constant",
                    eps,
                    counts,
                    Err(BundleError::MissingConstant {
                        constant: "M or L",
                        requirement: "the constant-stepsize bounds",
                    }),
                );
                c.verdict = Verdict::Skip;
                out.push(c);
            }
        }
        StepsizePolicy::OptGeneral { d_sq, .. } => {
            let mut inp = ctx.inputs(eps);
            inp.d_sq = Some(*d_sq);
            let mut c = judge(
                solver,
                "adaptive/general",
                eps,
                counts,
                bound_adaptive_step(&inp, AdaptiveRegime::OptGeneral, form),
            );
            if ctx.level_dist_sq.is_some_and(|l| *d_sq < l) {
                c.verdict = Verdict::Skip;
                c.note = "D² is below the level-set radius; the bound does not apply".into();
            }
            out.push(c);
        }
        StepsizePolicy::OptHolder { mu, p, .. } => {
            let matches = ctx.mu.is_some_and(|m| (m - mu).abs() <= 1e-12 * m) && ctx.p == Some(*p);
            let mut inp = ctx.inputs(eps);
            inp.mu = Some(*mu);
            inp.p = Some(*p);
            let mut c = judge(
                solver,
                "adaptive/holder",
                eps,
                counts,
                bound_adaptive_step(&inp, AdaptiveRegime::OptHolder, form),
            );
            if !matches {
                c.verdict = Verdict::Skip;
                c.note = "policy constants differ from the problem's".into();
            }
            out.push(c);
        }
        StepsizePolicy::Ideal { .. } => {
            let mut c = judge(solver, "ideal", eps, counts, Err(BundleError::Input(String::new())));
            c.note = "no ceiling for this policy".into();
            out.push(c);
        }
    }
    out
}

pub fn check_parallel(
    solver: &str,
    trace: &ParallelTrace,
    rho_bar: f64,
    instances: usize,
    ctx: &BoundContext,
    eps: f64,
    form: BoundForm,
) -> BoundCheck {
    let mut inp = ctx.inputs(eps);
    inp.rho_bar = Some(rho_bar);
    inp.instances = Some(instances);
    judge_rounds(solver, eps, rounds_until(trace, eps), bound_adaptive_step(&inp, AdaptiveRegime::Parallel, form))
}

/// Checks for every bundle and parallel solver of an executed experiment.
pub fn check_experiment(result: &ExperimentResult, eps_list: &[f64], form: BoundForm) -> Vec<BoundCheck> {
    let Some(reference) = &result.summary.reference else { return Vec::new() };
    let mut out = Vec::new();
    for r in &result.results {
        let Some(spec) = result.spec.solvers.iter().find(|s| s.name == r.report.name) else { continue };
        let beta = match &spec.method {
            SolverMethod::Bundle { beta, .. } | SolverMethod::Parallel { beta, .. } => beta.unwrap_or(result.spec.beta),
            _ => continue,
        };
        let ctx = BoundContext::from_problem(&result.problem, &result.x0, result.summary.f_x0, reference.f_star, beta);
        let Some(trace) = &r.trace else {
            for &eps in eps_list {
                let mut c = judge(
                    &r.report.name,
                    spec.method.kind(),
                    eps,
                    StepCounts::default(),
                    Err(BundleError::Input(String::new())),
                );
                c.note = format!("solver failed: {}", r.report.error.clone().unwrap_or_default());
                out.push(c);
            }
            continue;
        };
        for &eps in eps_list {
            match trace {
                SolverTrace::Serial(t) => {
                    let policy: Option<StepsizePolicy> =
                        serde_json::from_value(r.report.parameters["policy"].clone()).ok();
                    if let Some(policy) = policy {
                        out.extend(check_serial(&r.report.name, &policy, t, &ctx, eps, form));
                    }
                }
                SolverTrace::Parallel(p) => {
                    let params = &r.report.parameters;
                    let (Some(rho_bar), Some(j)) = (params["rho_bar"].as_f64(), params["instances"].as_u64()) else {
                        continue;
                    };
                    out.push(check_parallel(&r.report.name, p, rho_bar, j as usize, &ctx, eps, form));
                }
            }
        }
    }
    out
}

/// Run the experiment and check it against the ceilings.
pub fn verify_bounds(spec: &ExperimentSpec) -> Result<Vec<BoundCheck>> {
    let result = execute(spec)?;
    let (eps, form) = match &spec.verify {
        Some(v) => (v.eps.clone(), v.form),
        None => (DEFAULT_EPS.to_vec(), BoundForm::Simplified),
    };
    Ok(check_experiment(&result, &eps, form))
}
