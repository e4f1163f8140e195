//! First-order baselines: full-batch Pegasos for the SVM, gradient descent
//! and Nesterov's accelerated gradient descent.
//!
//! Each iteration makes exactly one oracle call. Row `k` of a trace reports
//! the value at the point queried by call `k`, so traces line up with bundle
//! traces on the oracle-call axis.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::oracle::{Evaluator, Oracle, SvmProblem};
use crate::trace::{RunTrace, StepKind, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaselineMethod {
    /// Subgradient steps `η_k = 1/(λk)` on the SVM objective.
    Pegasos,
    GradientDescent {
        step: f64,
    },
    AcceleratedGradientDescent {
        step: f64,
    },
}

fn record(k: usize, f: f64, f_star: Option<f64>, rho: f64, calls: usize) -> TraceRecord {
    TraceRecord {
        k,
        step_type: StepKind::Step,
        f,
        gap: f_star.map(|fs| f - fs),
        rho,
        oracle_calls: calls,
        agg_norm: None,
    }
}

fn finish(mut trace: RunTrace, start: Instant) -> RunTrace {
    trace.finalize("max_iterations", start.elapsed().as_secs_f64());
    trace
}

/// Full (non-stochastic) Pegasos: `w_{k+1} = (1 − η_kλ)w_k + η_k (1/n)Σ_{yᵢ⟨w_k,xᵢ⟩<1} yᵢxᵢ`
/// with `η_k = 1/(λk)`. Makes `iterations + 1` oracle calls; the last one
/// evaluates the final iterate.
pub fn pegasos_run(problem: &SvmProblem, iterations: usize, w0: DVector<f64>, f_star: Option<f64>) -> Result<RunTrace> {
    if iterations == 0 {
        return input("pegasos needs at least one iteration");
    }
    let start = Instant::now();
    let mut ev = Evaluator::new(problem);
    let mut w = w0;
    let mut trace = RunTrace::default();
    for k in 1..=iterations {
        let e = ev.eval(&w)?;
        let eta = 1.0 / (problem.lambda * k as f64);
        trace.push(record(k, e.value, f_star, 1.0 / eta, ev.calls()));
        w -= e.subgradient * eta;
    }
    let e = ev.eval(&w)?;
    trace.push(record(iterations + 1, e.value, f_star, problem.lambda * (iterations + 1) as f64, ev.calls()));
    Ok(finish(trace, start))
}

fn check_step(step: f64, iterations: usize) -> Result<()> {
    if !(step >= 0.0 && step.is_finite()) {
        return input(format!("step must be nonnegative and finite, got {step}"));
    }
    if iterations == 0 {
        return input("need at least one iteration");
    }
    Ok(())
}

/// `x_{k+1} = x_k − step·∇f(x_k)`.
pub fn gd_run(
    oracle: &dyn Oracle,
    step: f64,
    iterations: usize,
    x0: DVector<f64>,
    f_star: Option<f64>,
) -> Result<RunTrace> {
    check_step(step, iterations)?;
    let start = Instant::now();
    let mut ev = Evaluator::new(oracle);
    let mut x = x0;
    let mut trace = RunTrace::default();
    for k in 1..=iterations {
        let e = ev.eval(&x)?;
        trace.push(record(k, e.value, f_star, 1.0 / step, ev.calls()));
        x -= e.subgradient * step;
    }
    Ok(finish(trace, start))
}

/// Nesterov's method: `x_k = y_k − step·∇f(y_k)`,
/// `t_{k+1} = (1 + √(1 + 4t_k²))/2`, `y_{k+1} = x_k + ((t_k − 1)/t_{k+1})(x_k − x_{k−1})`,
/// with `y₁ = x₀` and `t₁ = 1`. Values are reported at the queried `y_k`.
pub fn agd_run(
    oracle: &dyn Oracle,
    step: f64,
    iterations: usize,
    x0: DVector<f64>,
    f_star: Option<f64>,
) -> Result<RunTrace> {
    check_step(step, iterations)?;
    let start = Instant::now();
    let mut ev = Evaluator::new(oracle);
    let mut x_prev = x0.clone();
    let mut y = x0;
    let mut t = 1.0_f64;
    let mut trace = RunTrace::default();
    for k in 1..=iterations {
        let e = ev.eval(&y)?;
        trace.push(record(k, e.value, f_star, 1.0 / step, ev.calls()));
        let x = &y - e.subgradient * step;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x + (&x - &x_prev) * ((t - 1.0) / t_next);
        x_prev = x;
        t = t_next;
    }
    Ok(finish(trace, start))
}
