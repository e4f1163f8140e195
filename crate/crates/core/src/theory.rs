//! Closed-form iteration ceilings for the bundle method.
//!
//! Every step bound comes in two forms: the simplified one with
//! `⌈2·log(·)/β⌉` terms and a sharper one with `⌈log(·)/(−log(1−β/2))⌉`.
//! Since `−log(1−c) ≥ c`, the sharp form never exceeds the simplified one.

use serde::{Deserialize, Serialize};

use crate::error::{input, BundleError, Result};

/// `max{⌈x⌉, 0}`.
pub fn ceil_plus(x: f64) -> f64 {
    x.ceil().max(0.0)
}

/// Lower bound on the proximal gap `f(x) − min_z {f(z) + ρ/2‖z − x‖²}` from
/// the objective gap and the distance to a minimizer.
pub fn prox_gap_lower_bound(gap: f64, dist: f64, rho: f64) -> f64 {
    if gap <= rho * dist * dist {
        (gap / dist).powi(2) / (2.0 * rho)
    } else {
        gap - 0.5 * rho * dist * dist
    }
}

/// The same lower bound once Hölder growth `f − f* ≥ μ·dist^p` replaces the
/// distance.
pub fn holder_prox_gap_bound(gap: f64, mu: f64, p: f64, rho: f64) -> f64 {
    let m = mu.powf(2.0 / p);
    if gap.powf(1.0 - 2.0 / p) <= rho / m {
        m * gap.powf(2.0 - 2.0 / p) / (2.0 * rho)
    } else {
        0.5 * gap
    }
}

/// Steps needed by any sequence with `δ_{k+1} ≤ δ_k − α·δ_k^q` to reach `ε`.
pub fn recurrence_steps(alpha: f64, q: f64, eps: f64) -> Result<u64> {
    if !(alpha > 0.0 && q > 1.0 && eps > 0.0) {
        return input(format!("recurrence needs alpha > 0, q > 1, eps > 0 (got {alpha}, {q}, {eps})"));
    }
    let steps = (1.0 / ((q - 1.0) * alpha * eps.powf(q - 1.0))).ceil();
    if !steps.is_finite() || steps > u64::MAX as f64 {
        return Err(BundleError::Internal(format!("recurrence step count overflows ({steps})")));
    }
    Ok(steps as u64)
}

/// Maximum number of consecutive null steps after a descent step, given the
/// largest subgradient norm `g_sup` seen in the run and the true proximal
/// gap `delta` at the end of the run.
pub fn null_run_bound(g_sup: f64, beta: f64, rho: f64, delta: f64) -> f64 {
    8.0 * g_sup * g_sup / ((1.0 - beta).powi(2) * rho * delta)
}

/// Consecutive-null-step ceiling for an `L`-smooth objective.
pub fn null_run_bound_smooth(l: f64, beta: f64, rho: f64) -> f64 {
    16.0 * (l + rho).powi(3) / ((1.0 - beta).powi(2) * rho.powi(3))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    /// `⌈2·log(·)/β⌉`-style terms.
    Simplified,
    /// `⌈log(·)/(−log(1−β/2))⌉`-style terms.
    Exact,
}

/// Inputs to the step-count ceilings. `eps ≤ gap0` is required.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateInputs {
    pub m: Option<f64>,
    pub l: Option<f64>,
    pub mu: Option<f64>,
    pub p: Option<f64>,
    pub rho: Option<f64>,
    pub beta: f64,
    pub eps: f64,
    /// `f(x₀) − f*`.
    pub gap0: f64,
    pub d_sq: Option<f64>,
    /// Smallest stepsize of a parallel run.
    pub rho_bar: Option<f64>,
    /// Number of parallel instances.
    pub instances: Option<usize>,
}

impl RateInputs {
    pub fn new(beta: f64, eps: f64, gap0: f64) -> Self {
        RateInputs { beta, eps, gap0, ..Default::default() }
    }

    fn check(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return input(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.eps > 0.0) {
            return input(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.eps <= self.gap0) {
            return Err(BundleError::Precondition(format!(
                "eps = {:e} exceeds the initial gap {:e}; the bound is vacuous",
                self.eps, self.gap0
            )));
        }
        Ok(())
    }
}

fn need(v: Option<f64>, constant: &'static str, requirement: &'static str) -> Result<f64> {
    match v {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(BundleError::Input(format!("{constant} must be positive and finite, got {x}"))),
        None => Err(BundleError::MissingConstant { constant, requirement }),
    }
}

fn need_p(v: Option<f64>, requirement: &'static str) -> Result<f64> {
    match v {
        Some(p) if p >= 1.0 && p.is_finite() => Ok(p),
        Some(p) => Err(BundleError::Input(format!("growth exponent p must be >= 1, got {p}"))),
        None => Err(BundleError::MissingConstant { constant: "p", requirement }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct StepBounds {
    pub descent_bound: f64,
    pub null_bound: f64,
    pub total: f64,
    /// Oracle calls implied by the bound (parallel runs only).
    pub oracle_calls: Option<f64>,
}

impl StepBounds {
    fn new(descent_bound: f64, null_bound: f64) -> Self {
        StepBounds { descent_bound, null_bound, total: descent_bound + null_bound, oracle_calls: None }
    }
}

/// `⌈log(ratio)/rate⌉` where `rate` is `c` (simplified) or `−log(1−c)`
/// (exact), `c` being the guaranteed fractional decrease per descent step.
fn geometric_steps(ratio: f64, c: f64, form: BoundForm) -> f64 {
    let rate = match form {
        BoundForm::Simplified => c,
        BoundForm::Exact => -(-c).ln_1p(),
    };
    ceil_plus(ratio.ln() / rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuity {
    /// `M`-Lipschitz objective.
    Lipschitz,
    /// `L`-smooth objective.
    Smooth,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    None,
    /// `f − f* ≥ μ·dist(·, X*)^p`.
    Holder,
}

const LIP: &str = "the Lipschitz constant-stepsize bound";
const SMOOTH: &str = "the smooth constant-stepsize bound";
const LIP_GROWTH: &str = "the Lipschitz constant-stepsize bound under Hölder growth";
const SMOOTH_GROWTH: &str = "the smooth constant-stepsize bound under Hölder growth";
const OPT_GENERAL: &str = "the adaptive (f − f*)/D² stepsize bound";
const OPT_HOLDER: &str = "the adaptive Hölder stepsize bound";
const PARALLEL: &str = "the parallel bundle bound";

/// Descent-step ceiling shared by the constant-stepsize regimes without
/// growth: `2ρD²/(βε) + ⌈2log(gap₀/(ρD²))/β⌉₊`.
fn descent_no_growth(inp: &RateInputs, rho: f64, d_sq: f64, form: BoundForm) -> f64 {
    2.0 * rho * d_sq / (inp.beta * inp.eps) + geometric_steps(inp.gap0 / (rho * d_sq), inp.beta / 2.0, form)
}

/// Descent-step ceiling under Hölder growth with constant stepsize.
fn descent_growth(inp: &RateInputs, rho: f64, mu: f64, p: f64, form: BoundForm) -> f64 {
    let beta = inp.beta;
    let m = mu.powf(2.0 / p);
    if p == 2.0 {
        // Both recurrence branches contract by β·min{μ/2ρ, 1/2}.
        let c = beta * (mu / (2.0 * rho)).min(0.5);
        return geometric_steps(inp.gap0 / inp.eps, c, form);
    }
    let e = 1.0 - 2.0 / p;
    let threshold = (rho / m).powf(1.0 / e);
    if p > 2.0 {
        2.0 * rho / (e * beta * m * inp.eps.powf(e)) + geometric_steps(inp.gap0 / threshold, beta / 2.0, form)
    } else {
        geometric_steps(threshold / inp.eps, beta / 2.0, form)
            + 2.0 * rho * inp.gap0.powf(-e) / ((1.0 - 2f64.powf(e)) * beta * m)
    }
}

/// Step ceilings for a constant stepsize `ρ`.
pub fn bound_constant_step(
    inp: &RateInputs,
    continuity: Continuity,
    growth: Growth,
    form: BoundForm,
) -> Result<StepBounds> {
    inp.check()?;
    let beta = inp.beta;
    let b2 = (1.0 - beta).powi(2);
    match (continuity, growth) {
        (Continuity::Lipschitz, Growth::None) => {
            let m = need(inp.m, "M", LIP)?;
            let rho = need(inp.rho, "rho", LIP)?;
            let d_sq = need(inp.d_sq, "D²", LIP)?;
            let eps = inp.eps;
            let descent = descent_no_growth(inp, rho, d_sq, form);
            let null = 48.0 * rho * m * m * d_sq * d_sq / (beta * b2 * eps.powi(3))
                + 32.0 * m * m / (beta * b2 * rho * rho * d_sq);
            Ok(StepBounds::new(descent, null))
        }
        (Continuity::Smooth, Growth::None) => {
            let l = need(inp.l, "L", SMOOTH)?;
            let rho = need(inp.rho, "rho", SMOOTH)?;
            let d_sq = need(inp.d_sq, "D²", SMOOTH)?;
            let descent = descent_no_growth(inp, rho, d_sq, form);
            Ok(StepBounds::new(descent, null_run_bound_smooth(l, beta, rho) * (descent + 1.0)))
        }
        (Continuity::Lipschitz, Growth::Holder) => {
            let m = need(inp.m, "M", LIP_GROWTH)?;
            let rho = need(inp.rho, "rho", LIP_GROWTH)?;
            let mu = need(inp.mu, "mu", LIP_GROWTH)?;
            let p = need_p(inp.p, LIP_GROWTH)?;
            let eps = inp.eps;
            let descent = descent_growth(inp, rho, mu, p, form);
            let mp = mu.powf(2.0 / p);
            let null = if p == 2.0 {
                16.0 * m * m / (beta * b2 * (mu / rho).min(1.0) * rho * eps)
            } else {
                let e = 1.0 - 2.0 / p;
                let threshold = (rho / mp).powf(1.0 / e);
                let tail = 32.0 * m * m / (beta * b2 * rho * threshold);
                if p > 2.0 {
                    48.0 * rho * m * m / (e * beta * b2 * mu.powf(4.0 / p) * eps.powf(3.0 - 4.0 / p)) + tail
                } else {
                    let k = 4.0 / p - 3.0;
                    let halvings = ceil_plus((inp.gap0 / threshold).log2());
                    let c = (inp.gap0.powf(k) / threshold.powf(k)).max(1.0)
                        * (1.0 / (1.0 - 2f64.powf(-k.abs()))).min(halvings);
                    16.0 * m * m / (beta * b2 * rho * eps) + tail * c
                }
            };
            Ok(StepBounds::new(descent, null))
        }
        (Continuity::Smooth, Growth::Holder) => {
            let l = need(inp.l, "L", SMOOTH_GROWTH)?;
            let rho = need(inp.rho, "rho", SMOOTH_GROWTH)?;
            let mu = need(inp.mu, "mu", SMOOTH_GROWTH)?;
            let p = need_p(inp.p, SMOOTH_GROWTH)?;
            let descent = descent_growth(inp, rho, mu, p, form);
            let per_descent = null_run_bound_smooth(l, beta, rho);
            let null = if p == 2.0 { per_descent * descent } else { per_descent * (descent + 1.0) };
            Ok(StepBounds::new(descent, null))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveRegime {
    /// `ρ_k = (f(x_k) − f*)/D²` on an `M`-Lipschitz objective.
    OptGeneral,
    /// `ρ_k = μ^{2/p}(f(x_k) − f*)^{1−2/p}` under Hölder growth.
    OptHolder,
    /// Parallel instances with geometric stepsizes; counts rounds.
    Parallel,
}

/// `ρ̄` and instance count that satisfy the parallel preconditions for the
/// given growth constants and target accuracy.
pub fn parallel_parameters(mu: f64, p: f64, eps: f64, gap0: f64) -> Result<(f64, usize)> {
    if !(mu > 0.0 && p >= 1.0 && eps > 0.0 && eps <= gap0) {
        return input(format!("need mu > 0, p >= 1 and 0 < eps <= gap0 (got {mu}, {p}, {eps}, {gap0})"));
    }
    let m = mu.powf(2.0 / p);
    let e = 1.0 - 2.0 / p;
    let (lo, hi) = {
        let (a, b) = (eps.powf(e), gap0.powf(e));
        (a.min(b), a.max(b))
    };
    let rho_bar = 0.25 * m * lo;
    let j = (m * hi / (4.0 * rho_bar)).log2().ceil().max(1.0);
    Ok((rho_bar, j as usize))
}

/// Check `ρ̄ ≤ ¼μ^{2/p}min{ε^{1−2/p}, gap₀^{1−2/p}}` and
/// `J ≥ log₂(μ^{2/p}max{ε^{1−2/p}, gap₀^{1−2/p}}/(4ρ̄))`.
pub fn check_parallel_preconditions(
    mu: f64,
    p: f64,
    eps: f64,
    gap0: f64,
    rho_bar: f64,
    instances: usize,
) -> Result<()> {
    let m = mu.powf(2.0 / p);
    let e = 1.0 - 2.0 / p;
    let (a, b) = (eps.powf(e), gap0.powf(e));
    let rho_max = 0.25 * m * a.min(b);
    if rho_bar > rho_max {
        return Err(BundleError::Precondition(format!(
            "rho_bar = {rho_bar:e} exceeds the admissible maximum {rho_max:e}"
        )));
    }
    let j_min = (m * a.max(b) / (4.0 * rho_bar)).log2();
    if (instances as f64) < j_min {
        return Err(BundleError::Precondition(format!("J = {instances} instances is below the required {j_min:.3}")));
    }
    Ok(())
}

/// Step ceilings for the adaptive stepsize policies and the parallel method.
/// For [`AdaptiveRegime::Parallel`] the bounds count rounds (descent part:
/// two per accuracy level) and `oracle_calls` is `rounds × J`.
pub fn bound_adaptive_step(inp: &RateInputs, regime: AdaptiveRegime, form: BoundForm) -> Result<StepBounds> {
    inp.check()?;
    let beta = inp.beta;
    let b2 = (1.0 - beta).powi(2);
    let levels = geometric_steps(inp.gap0 / inp.eps, beta / 2.0, form);
    let shrink = 1.0 - beta / 2.0;
    match regime {
        AdaptiveRegime::OptGeneral => {
            let m = need(inp.m, "M", OPT_GENERAL)?;
            let d_sq = need(inp.d_sq, "D²", OPT_GENERAL)?;
            let null = 8.0 * m * m * d_sq / ((1.0 - shrink * shrink) * b2 * inp.eps.powi(2));
            Ok(StepBounds::new(levels, null))
        }
        AdaptiveRegime::OptHolder => {
            let m = need(inp.m, "M", OPT_HOLDER)?;
            let mu = need(inp.mu, "mu", OPT_HOLDER)?;
            let p = need_p(inp.p, OPT_HOLDER)?;
            let null = if p > 1.0 {
                let k = 2.0 - 2.0 / p;
                8.0 * m * m / ((1.0 - shrink.powf(k)) * b2 * mu.powf(2.0 / p) * inp.eps.powf(k))
            } else {
                8.0 * m * m / (b2 * mu * mu) * levels
            };
            Ok(StepBounds::new(levels, null))
        }
        AdaptiveRegime::Parallel => {
            let m = need(inp.m, "M", PARALLEL)?;
            let mu = need(inp.mu, "mu", PARALLEL)?;
            let p = need_p(inp.p, PARALLEL)?;
            let rho_bar = need(inp.rho_bar, "rho_bar", PARALLEL)?;
            let j = inp.instances.ok_or(BundleError::MissingConstant { constant: "J", requirement: PARALLEL })?;
            check_parallel_preconditions(mu, p, inp.eps, inp.gap0, rho_bar, j)?;
            let null = if p > 1.0 {
                let k = 2.0 - 2.0 / p;
                2.0 / (1.0 - shrink.powf(k)) * 64.0 * m * m / (b2 * mu.powf(2.0 / p) * inp.eps.powf(k))
            } else {
                2.0 * 64.0 * m * m / (b2 * mu * mu) * levels
            };
            let mut b = StepBounds::new(2.0 * levels, null);
            b.oracle_calls = Some(b.total * j as f64);
            Ok(b)
        }
    }
}
