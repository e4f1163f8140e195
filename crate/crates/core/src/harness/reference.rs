//! High-accuracy optimal values for problems without a closed form.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::ReferenceOptions;
use crate::engine::{bundle_step, BundleConfig, BundleState, StepsizePolicy};
use crate::error::{input, Result};
use crate::model::ModelStrategy;
use crate::oracle::{Evaluator, Oracle};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    /// Known from the construction of the problem.
    Analytic,
    /// Supplied in the config.
    Given,
    /// Computed by a full-memory bundle run.
    Numeric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub f_star: f64,
    pub source: ReferenceSource,
    /// True when a stopping test proved the accuracy target.
    pub certified: bool,
    /// Proven upper bound on `f_star − inf f`, when available.
    pub gap_bound: Option<f64>,
    pub iterations: usize,
    pub oracle_calls: usize,
    pub agg_norm: Option<f64>,
    pub stop: String,
}

impl ReferenceSolution {
    fn exact(f_star: f64, source: ReferenceSource) -> Self {
        ReferenceSolution {
            f_star,
            source,
            certified: true,
            gap_bound: Some(0.0),
            iterations: 0,
            oracle_calls: 0,
            agg_norm: None,
            stop: source_name(source).to_string(),
        }
    }
}

fn source_name(s: ReferenceSource) -> &'static str {
    match s {
        ReferenceSource::Analytic => "analytic",
        ReferenceSource::Given => "given",
        ReferenceSource::Numeric => "numeric",
    }
}

/// Largest `g ≥ 0` with `g ≤ lin_err + s·(g/μ)^{1/p}`.
///
/// The aggregate cut gives `f(y) ≥ f(x) − lin_err − s‖y − x‖`; at the
/// nearest minimizer, growth bounds `‖y − x‖` by `((f(x) − f*)/μ)^{1/p}`,
/// so `f(x) − f*` is at most this root. `None` when the inequality does not
/// bound `g` (p = 1 with `s ≥ μ`).
pub fn growth_gap_bound(lin_err: f64, s: f64, mu: f64, p: f64) -> Option<f64> {
    let lin_err = lin_err.max(0.0);
    if !(mu > 0.0 && p >= 1.0 && s >= 0.0) {
        return None;
    }
    if s == 0.0 {
        return Some(lin_err);
    }
    if p == 1.0 {
        return (s < mu).then(|| lin_err / (1.0 - s / mu));
    }
    let h = |g: f64| g - s * (g / mu).powf(1.0 / p) - lin_err;
    let mut hi = lin_err.max(f64::MIN_POSITIVE);
    while h(hi) <= 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return None;
        }
    }
    // h is convex with h(0) ≤ 0, so {h ≤ 0} = [0, root].
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(hi)
}

/// The problem's optimal value: analytic when the construction provides it,
/// otherwise from a full-memory bundle run stopped by the aggregate norm or
/// by the growth certificate. A run that exhausts its budget still returns
/// its best value, flagged as not certified.
pub fn reference_solve(oracle: &dyn Oracle, x0: &DVector<f64>, opts: &ReferenceOptions) -> Result<ReferenceSolution> {
    let c = oracle.constants();
    if let Some(f) = c.f_star {
        return Ok(ReferenceSolution::exact(f, ReferenceSource::Analytic));
    }
    let rho = opts.rho.unwrap_or(match (c.growth_mu, c.growth_p) {
        (Some(mu), Some(p)) if p == 2.0 => 2.0 * mu,
        _ => 1.0,
    });
    if !(rho > 0.0) || opts.max_iterations == 0 {
        return input("reference solve needs rho > 0 and a positive budget");
    }
    let config = BundleConfig::new(StepsizePolicy::Constant { rho })
        .with_model(ModelStrategy::FullMemory { capacity: opts.capacity })
        .with_max_iterations(opts.max_iterations);
    let mut ev = Evaluator::new(oracle);
    let mut state = BundleState::initialize(&mut ev, x0.clone(), &config)?;
    let mut best = state.fx;
    let mut best_bound: Option<f64> = None;
    let mut last_agg = None;
    let mut stop = "max_iterations";
    let mut certified = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let center = state.x.clone();
        let out = bundle_step(&mut state, &mut ev, &config)?;
        iterations += 1;
        best = best.min(state.fx);
        last_agg = Some(out.agg_norm);
        if let (Some(mu), Some(p)) = (c.growth_mu, c.growth_p) {
            let lin_err = out.f_center - out.prox.aggregate_cut.value(&center);
            if let Some(b) = growth_gap_bound(lin_err, out.agg_norm, mu, p) {
                // The bound is on f(center) − f*, and best ≤ f(center).
                let b = b - (out.f_center - best);
                best_bound = Some(best_bound.map_or(b, |o: f64| o.min(b)).max(0.0));
            }
        }
        if out.agg_norm <= opts.agg_tol {
            stop = "aggregate_norm";
            certified = true;
            break;
        }
        if best_bound.is_some_and(|b| b <= opts.gap_tol * (1.0 + best.abs())) {
            stop = "growth_certificate";
            certified = true;
            break;
        }
    }
    Ok(ReferenceSolution {
        f_star: best,
        source: ReferenceSource::Numeric,
        certified,
        gap_bound: best_bound,
        iterations,
        oracle_calls: ev.calls(),
        agg_norm: last_agg,
        stop: stop.to_string(),
    })
}
