//! The serial proximal bundle method.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{input, BundleError, Result};
use crate::model::{Cut, CutModel, ModelStrategy};
use crate::oracle::{Evaluator, Oracle};
use crate::prox::{prox_model_with_path, ProxPath, ProxResult};
use crate::trace::{RunTrace, StepKind, TraceRecord};

/// Rule producing the prox stepsize `ρ_k` at each new center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepsizePolicy {
    Constant {
        rho: f64,
    },
    /// `(f(x_k) − f*)/‖x_k − x*‖²`; needs the optimal value and a minimizer.
    Ideal {
        f_star: f64,
        x_star: DVector<f64>,
    },
    /// `(f(x_k) − f*)/D²`.
    OptGeneral {
        d_sq: f64,
        f_star: f64,
    },
    /// `μ^{2/p}(f(x_k) − f*)^{1−2/p}`.
    OptHolder {
        mu: f64,
        p: f64,
        f_star: f64,
    },
}

impl StepsizePolicy {
    pub fn f_star(&self) -> Option<f64> {
        match self {
            StepsizePolicy::Constant { .. } => None,
            StepsizePolicy::Ideal { f_star, .. }
            | StepsizePolicy::OptGeneral { f_star, .. }
            | StepsizePolicy::OptHolder { f_star, .. } => Some(*f_star),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StepsizePolicy::Constant { rho } if !(*rho > 0.0 && rho.is_finite()) => {
                input(format!("constant stepsize must be positive, got {rho}"))
            }
            StepsizePolicy::OptGeneral { d_sq, .. } if !(*d_sq > 0.0) => {
                input(format!("D² must be positive, got {d_sq}"))
            }
            StepsizePolicy::OptHolder { mu, p, .. } if !(*mu > 0.0 && *p >= 1.0) => {
                input(format!("OptHolder needs mu > 0 and p >= 1, got mu={mu}, p={p}"))
            }
            _ => Ok(()),
        }
    }
}

/// `ρ_k` for the center `x_k` with value `f(x_k)`.
pub fn compute_rho(policy: &StepsizePolicy, x_k: &DVector<f64>, f_xk: f64) -> Result<f64> {
    let rho = match policy {
        StepsizePolicy::Constant { rho } => *rho,
        StepsizePolicy::Ideal { f_star, x_star } => {
            if x_star.len() != x_k.len() {
                return Err(BundleError::DimensionMismatch { expected: x_k.len(), got: x_star.len() });
            }
            (f_xk - f_star) / (x_k - x_star).norm_squared()
        }
        StepsizePolicy::OptGeneral { d_sq, f_star } => (f_xk - f_star) / d_sq,
        StepsizePolicy::OptHolder { mu, p, f_star } => mu.powf(2.0 / p) * (f_xk - f_star).powf(1.0 - 2.0 / p),
    };
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(BundleError::Internal(format!("stepsize policy produced rho = {rho} at f(x_k) = {f_xk}")));
    }
    Ok(rho)
}

/// `D² = dist(x₀, X*)² + 2(1−β)(f(x₀) − f*)/(βρ)`, a bound on the squared
/// distance of every iterate to the solution set under constant `ρ`.
pub fn theoretical_d_sq(dist0_sq: f64, gap0: f64, beta: f64, rho: f64) -> f64 {
    dist0_sq + 2.0 * (1.0 - beta) * gap0 / (beta * rho)
}

/// Default descent-test fraction.
pub const DEFAULT_BETA: f64 = 0.5;

/// Default dual-solver tolerance for full-memory models.
pub const DEFAULT_PROX_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleConfig {
    pub beta: f64,
    pub policy: StepsizePolicy,
    pub model: ModelStrategy,
    pub max_iterations: usize,
    /// Stop once `f(x_k) − f* ≤ target_gap` (needs a known `f*`).
    pub target_gap: Option<f64>,
    /// Stop once `‖s_{k+1}‖` falls to this level.
    pub stop_on_aggregate_norm: Option<f64>,
    pub prox_tol: f64,
    /// Optimal value used for reporting gaps; defaults to the policy's.
    pub f_star: Option<f64>,
}

impl BundleConfig {
    pub fn new(policy: StepsizePolicy) -> Self {
        BundleConfig {
            beta: DEFAULT_BETA,
            policy,
            model: ModelStrategy::TwoCut,
            max_iterations: 1000,
            target_gap: None,
            stop_on_aggregate_norm: None,
            prox_tol: DEFAULT_PROX_TOL,
            f_star: None,
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_model(mut self, model: ModelStrategy) -> Self {
        self.model = model;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_target_gap(mut self, eps: f64) -> Self {
        self.target_gap = Some(eps);
        self
    }

    pub fn with_f_star(mut self, f_star: f64) -> Self {
        self.f_star = Some(f_star);
        self
    }

    pub fn with_aggregate_stop(mut self, tol: f64) -> Self {
        self.stop_on_aggregate_norm = Some(tol);
        self
    }

    pub fn with_prox_tol(mut self, tol: f64) -> Self {
        self.prox_tol = tol;
        self
    }

    pub fn known_f_star(&self) -> Option<f64> {
        self.f_star.or_else(|| self.policy.f_star())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return input(format!("beta must lie strictly inside (0, 1), got {}", self.beta));
        }
        if self.max_iterations == 0 {
            return input("max_iterations must be at least 1");
        }
        if !(self.prox_tol > 0.0) {
            return input(format!("prox_tol must be positive, got {}", self.prox_tol));
        }
        self.policy.validate()?;
        self.model.validate()
    }
}

/// Mutable state of one bundle-method instance.
#[derive(Clone, Debug)]
pub struct BundleState {
    /// Current center `x_k`.
    pub x: DVector<f64>,
    pub fx: f64,
    /// Oracle subgradient at the center.
    pub gx: DVector<f64>,
    pub model: CutModel,
    pub rho: f64,
    pub k: usize,
    pub descents: usize,
    pub nulls: usize,
    pub oracle_calls: usize,
}

impl BundleState {
    /// Evaluate the oracle at `x0` and build `f_0 = f(x₀) + ⟨g₀, · − x₀⟩`.
    pub fn initialize(ev: &mut Evaluator<'_>, x0: DVector<f64>, config: &BundleConfig) -> Result<Self> {
        config.validate()?;
        let e = ev.eval(&x0)?;
        Self::from_evaluation(x0, e.value, e.subgradient, config)
    }

    /// Build a state from an already-evaluated point (no oracle call).
    pub fn from_evaluation(x: DVector<f64>, fx: f64, gx: DVector<f64>, config: &BundleConfig) -> Result<Self> {
        let model = CutModel::new(config.model, Cut::from_oracle(&x, fx, gx.clone()))?;
        let rho = initial_rho(config, &x, fx)?;
        Ok(BundleState { x, fx, gx, model, rho, k: 0, descents: 0, nulls: 0, oracle_calls: 1 })
    }

    pub fn gap(&self, f_star: Option<f64>) -> Option<f64> {
        f_star.map(|fs| self.fx - fs)
    }

    /// Move the center to an externally supplied point and reset the model
    /// to the single cut there.
    pub fn adopt(&mut self, x: DVector<f64>, fx: f64, gx: DVector<f64>, config: &BundleConfig) -> Result<()> {
        self.model.reset(Cut::from_oracle(&x, fx, gx.clone()));
        self.rho = initial_rho(config, &x, fx)?;
        self.x = x;
        self.fx = fx;
        self.gx = gx;
        Ok(())
    }
}

fn initial_rho(config: &BundleConfig, x: &DVector<f64>, fx: f64) -> Result<f64> {
    match config.policy.f_star() {
        // Already optimal: the f*-based rules are undefined, any ρ works.
        Some(fs) if fx - fs <= 0.0 => Ok(1.0),
        _ => compute_rho(&config.policy, x, fx),
    }
}

/// What happened in one step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub kind: StepKind,
    pub prox: ProxResult,
    pub path: ProxPath,
    /// Stepsize used for this step.
    pub rho: f64,
    /// `f(x_k)` before the step.
    pub f_center: f64,
    /// `f(z_{k+1})`.
    pub f_candidate: f64,
    pub agg_norm: f64,
}

impl StepOutcome {
    /// `f(x_k) − f_k(z_{k+1})`.
    pub fn predicted_decrease(&self) -> f64 {
        self.f_center - self.prox.model_value_at_z
    }
}

/// One iteration: prox step on the model, one oracle call at the
/// candidate, the descent test, and the model / stepsize update.
pub fn bundle_step(state: &mut BundleState, ev: &mut Evaluator<'_>, config: &BundleConfig) -> Result<StepOutcome> {
    let rho = state.rho;
    let (prox, path) = prox_model_with_path(&state.model, &state.x, rho, config.prox_tol)?;
    let e = ev.eval(&prox.z_next)?;
    state.oracle_calls += 1;
    state.k += 1;

    let f_center = state.fx;
    let descent = config.beta * (f_center - prox.model_value_at_z) <= f_center - e.value;
    let oracle_cut = Cut::from_oracle(&prox.z_next, e.value, e.subgradient.clone());
    let kind = if descent {
        state.model.update_after_descent(&prox, oracle_cut);
        state.x = prox.z_next.clone();
        state.fx = e.value;
        state.gx = e.subgradient;
        state.descents += 1;
        // ρ only changes at descent steps, so it is constant across null runs.
        state.rho = initial_rho(config, &state.x, state.fx)?;
        StepKind::Descent
    } else {
        state.model.update_after_null(&prox, oracle_cut);
        state.nulls += 1;
        StepKind::Null
    };
    let agg_norm = prox.aggregate_subgradient.norm();
    Ok(StepOutcome { kind, prox, path, rho, f_center, f_candidate: e.value, agg_norm })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    TargetGap,
    AggregateNorm,
    ExactOptimum,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::MaxIterations => "max_iterations",
            StopReason::TargetGap => "target_gap",
            StopReason::AggregateNorm => "aggregate_norm",
            StopReason::ExactOptimum => "exact_optimum",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Stopped(StopReason),
    /// The run aborted; the trace holds everything up to the failure.
    Failed(String),
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub x: DVector<f64>,
    pub fx: f64,
    pub status: RunStatus,
}

impl RunOutcome {
    pub fn stop_reason(&self) -> Option<StopReason> {
        match self.status {
            RunStatus::Stopped(r) => Some(r),
            RunStatus::Failed(_) => None,
        }
    }
}

pub(crate) fn stop_check(config: &BundleConfig, gap: Option<f64>, agg_norm: Option<f64>) -> Option<StopReason> {
    if let (Some(g), Some(eps)) = (gap, config.target_gap) {
        if g <= eps {
            return Some(StopReason::TargetGap);
        }
    }
    if let (Some(n), Some(tol)) = (agg_norm, config.stop_on_aggregate_norm) {
        if n <= tol {
            return Some(StopReason::AggregateNorm);
        }
    }
    if config.policy.f_star().is_some() && gap.is_some_and(|g| g <= 0.0) {
        return Some(StopReason::ExactOptimum);
    }
    None
}

/// Run the bundle method from `x0` until a stopping rule fires.
///
/// Errors only for invalid input; solver failures mid-run are reported in
/// the returned status together with the partial trace.
pub fn run(oracle: &dyn Oracle, config: &BundleConfig, x0: DVector<f64>) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut ev = Evaluator::new(oracle);
    let mut state = BundleState::initialize(&mut ev, x0, config)?;
    let f_star = config.known_f_star();
    let mut trace = RunTrace::default();
    trace.push(TraceRecord {
        k: 0,
        step_type: StepKind::Init,
        f: state.fx,
        gap: state.gap(f_star),
        rho: state.rho,
        oracle_calls: ev.calls(),
        agg_norm: None,
    });

    let mut status = match stop_check(config, state.gap(f_star), None) {
        Some(r) => RunStatus::Stopped(r),
        None => RunStatus::Stopped(StopReason::MaxIterations),
    };
    if stop_check(config, state.gap(f_star), None).is_none() {
        while state.k < config.max_iterations {
            let outcome = match bundle_step(&mut state, &mut ev, config) {
                Ok(o) => o,
                Err(e) => {
                    status = RunStatus::Failed(e.to_string());
                    break;
                }
            };
            trace.push(TraceRecord {
                k: state.k,
                step_type: outcome.kind,
                f: state.fx,
                gap: state.gap(f_star),
                rho: outcome.rho,
                oracle_calls: ev.calls(),
                agg_norm: Some(outcome.agg_norm),
            });
            if let Some(r) = stop_check(config, state.gap(f_star), Some(outcome.agg_norm)) {
                status = RunStatus::Stopped(r);
                break;
            }
        }
    }
    let reason = match &status {
        RunStatus::Stopped(r) => r.as_str().to_string(),
        RunStatus::Failed(msg) => format!("failed: {msg}"),
    };
    trace.finalize(reason, start.elapsed().as_secs_f64());
    Ok(RunOutcome { trace, x: state.x, fx: state.fx, status })
}
