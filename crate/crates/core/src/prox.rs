//! The proximal subproblem `argmin_z f_k(z) + (ρ/2)‖z − x‖²`.
//!
//! With one or two cuts the minimizer is available in closed form. With
//! more cuts we solve the dual over the simplex,
//!
//! ```text
//! max_λ∈Δ  Σ λⱼ cutⱼ(x) − ‖Σ λⱼ slopeⱼ‖² / (2ρ),
//! ```
//!
//! by accelerated projected gradient, and finish with an exact solve of the
//! KKT system on the identified support.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{input, BundleError, Result};
use crate::linalg::project_simplex;
use crate::model::{Cut, CutModel, ModelStrategy};

/// Below this `‖g − s‖²` the two cuts are treated as parallel.
pub const PARALLEL_SLOPES_SQ: f64 = 1e-28;

/// Iteration cap for the dual solver.
pub const MAX_DUAL_ITERATIONS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SolveStatus {
    ClosedForm,
    Iterative { iterations: usize, residual: f64 },
}

/// Solution of the proximal subproblem on a cut model.
#[derive(Clone, Debug)]
pub struct ProxResult {
    pub z_next: DVector<f64>,
    /// `f_k(z_{k+1})`.
    pub model_value_at_z: f64,
    /// `s_{k+1} = ρ(x_k − z_{k+1})`.
    pub aggregate_subgradient: DVector<f64>,
    /// Convex combination of the active cuts; its slope is the aggregate
    /// subgradient and it minorizes the model.
    pub aggregate_cut: Cut,
    pub dual_weights: Option<DVector<f64>>,
    /// Weight on the oracle cut for the two-cut closed form.
    pub theta: Option<f64>,
    pub status: SolveStatus,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return input(format!("prox stepsize must be positive and finite, got {rho}"));
    }
    Ok(())
}

fn finish(cuts: &[&Cut], aggregate_cut: Cut, x: &DVector<f64>, rho: f64) -> (DVector<f64>, f64, Cut) {
    let z = x - &aggregate_cut.slope / rho;
    let value = cuts.iter().map(|c| c.value(&z)).fold(f64::NEG_INFINITY, f64::max);
    (z, value, aggregate_cut)
}

/// Prox step on a single affine function: `z = x − slope/ρ`.
pub fn prox_single(cut: &Cut, x: &DVector<f64>, rho: f64) -> Result<ProxResult> {
    check_rho(rho)?;
    let mut agg = cut.clone();
    agg.origin = crate::model::CutOrigin::Aggregate;
    let (z, value, aggregate_cut) = finish(&[cut], agg, x, rho);
    Ok(ProxResult {
        z_next: z,
        model_value_at_z: value,
        aggregate_subgradient: aggregate_cut.slope.clone(),
        aggregate_cut,
        dual_weights: Some(DVector::from_element(1, 1.0)),
        theta: None,
        status: SolveStatus::ClosedForm,
    })
}

/// Closed-form prox of `max{cut_s, cut_g}`.
///
/// The optimal weight on `cut_g` maximizes the one-dimensional concave dual
/// `θ ↦ θ g(x) + (1−θ) s(x) − ‖θ g + (1−θ) s‖²/(2ρ)` over `[0, 1]`:
///
/// ```text
/// θ = clamp((ρ (cut_g(x) − cut_s(x)) − ⟨g − s, s⟩) / ‖g − s‖², 0, 1).
/// ```
///
/// When `cut_s` is the aggregate cut of a prox step centered at the same
/// `x` (so `s = ρ(x − z)`) this is `min{1, ρ(f(z) − f_t(z))/‖g − s‖²}`.
pub fn prox_two_cut(cut_s: &Cut, cut_g: &Cut, x: &DVector<f64>, rho: f64) -> Result<ProxResult> {
    check_rho(rho)?;
    let diff = &cut_g.slope - &cut_s.slope;
    let diff_sq = diff.norm_squared();
    let theta = if diff_sq < PARALLEL_SLOPES_SQ {
        // Parallel slopes: the max is one affine function plus a constant.
        if cut_g.value(x) >= cut_s.value(x) {
            1.0
        } else {
            0.0
        }
    } else {
        let numer = rho * (cut_g.value(x) - cut_s.value(x)) - diff.dot(&cut_s.slope);
        (numer / diff_sq).clamp(0.0, 1.0)
    };
    let agg = cut_g.combine(cut_s, theta);
    let (z, value, aggregate_cut) = finish(&[cut_s, cut_g], agg, x, rho);
    Ok(ProxResult {
        z_next: z,
        model_value_at_z: value,
        aggregate_subgradient: aggregate_cut.slope.clone(),
        aggregate_cut,
        dual_weights: Some(DVector::from_vec(vec![1.0 - theta, theta])),
        theta: Some(theta),
        status: SolveStatus::ClosedForm,
    })
}

/// Objective of the proximal subproblem at `z`.
pub fn subproblem_objective(cuts: &[Cut], x: &DVector<f64>, rho: f64, z: &DVector<f64>) -> f64 {
    let model = cuts.iter().map(|c| c.value(z)).fold(f64::NEG_INFINITY, f64::max);
    model + 0.5 * rho * (z - x).norm_squared()
}

struct Dual<'a> {
    gram: DMatrix<f64>,
    /// Cut values at the prox center.
    at_center: DVector<f64>,
    rho: f64,
    cuts: &'a [Cut],
}

impl Dual<'_> {
    /// `v = c̃ − Gλ/ρ`, the cut values at `z(λ)`; `−v` is the gradient of
    /// the (minimized) negative dual.
    fn cut_values(&self, lambda: &DVector<f64>) -> DVector<f64> {
        &self.at_center - &self.gram * lambda / self.rho
    }

    /// Primal-dual gap `max v − ⟨λ, v⟩` and the primal value.
    fn gap(&self, lambda: &DVector<f64>) -> (f64, f64) {
        let v = self.cut_values(lambda);
        let vmax = v.max();
        let quad = lambda.dot(&(&self.gram * lambda)) / (2.0 * self.rho);
        ((vmax - lambda.dot(&v)).max(0.0), vmax + quad)
    }

    /// Exact minimizer of the negative dual restricted to `support`, or
    /// `None` when the restricted solution leaves the simplex.
    fn polish(&self, support: &[usize]) -> Option<DVector<f64>> {
        let s = support.len();
        if s == 0 {
            return None;
        }
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = self.gram[(i, j)] / self.rho;
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = self.at_center[i];
        }
        rhs[s] = 1.0;
        let scale = kkt.amax().max(1.0);
        let sol = kkt.svd(true, true).solve(&rhs, 1e-13 * scale).ok()?;
        let m = self.cuts.len();
        let mut lambda = DVector::zeros(m);
        for (a, &i) in support.iter().enumerate() {
            if !(sol[a] >= -1e-12) {
                return None;
            }
            lambda[i] = sol[a].max(0.0);
        }
        let total = lambda.sum();
        if !(total > 0.0) {
            return None;
        }
        Some(lambda / total)
    }
}

impl Dual<'_> {
    /// Primal active-set method on the simplex dual with `reg·‖λ‖²/2`
    /// added, started from `lambda`. The regularization keeps every face
    /// system nonsingular when slopes are affinely dependent and moves the
    /// optimal value by at most `reg/2`.
    fn active_set(&self, lambda: &DVector<f64>, reg: f64) -> DVector<f64> {
        let m = self.cuts.len();
        let mut lam = lambda.clone();
        let mut work: Vec<usize> = support_of(&lam);
        for _ in 0..(4 * m + 20) {
            let Some((sol, level)) = self.solve_face(&work, reg) else { break };
            if sol.iter().all(|w| *w >= 0.0) {
                lam.fill(0.0);
                for (a, &i) in work.iter().enumerate() {
                    lam[i] = sol[a];
                }
                let v = self.cut_values(&lam);
                let out = (0..m).filter(|i| !work.contains(i)).max_by(|&a, &b| v[a].total_cmp(&v[b]));
                match out {
                    Some(j) if v[j] > level + 1e-15 * (1.0 + level.abs()) => work.push(j),
                    _ => break,
                }
            } else {
                // Move toward the face solution until a weight hits zero.
                let mut alpha = 1.0_f64;
                let mut blocking = 0;
                for (a, &i) in work.iter().enumerate() {
                    let d = sol[a] - lam[i];
                    if d < 0.0 && sol[a] < 0.0 {
                        let r = lam[i] / -d;
                        if r < alpha {
                            alpha = r;
                            blocking = a;
                        }
                    }
                }
                for (a, &i) in work.iter().enumerate() {
                    lam[i] = (lam[i] + alpha * (sol[a] - lam[i])).max(0.0);
                }
                let i = work.remove(blocking);
                lam[i] = 0.0;
                let total = lam.sum();
                if !(total > 0.0) {
                    break;
                }
                lam /= total;
            }
        }
        lam
    }

    /// Minimizer of the regularized dual on the affine hull of the face
    /// `support`, and the common cut level there.
    fn solve_face(&self, support: &[usize], reg: f64) -> Option<(DVector<f64>, f64)> {
        let s = support.len();
        if s == 0 {
            return None;
        }
        let mut kkt = DMatrix::zeros(s + 1, s + 1);
        let mut rhs = DVector::zeros(s + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = self.gram[(i, j)] / self.rho;
            }
            kkt[(a, a)] += reg;
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = self.at_center[i];
        }
        rhs[s] = 1.0;
        let sol = match kkt.clone().lu().solve(&rhs) {
            Some(x) if x.iter().all(|w| w.is_finite()) => x,
            _ => {
                let scale = kkt.amax().max(1.0);
                kkt.svd(true, true).solve(&rhs, 1e-13 * scale).ok()?
            }
        };
        if sol.iter().any(|w| !w.is_finite()) {
            return None;
        }
        Some((sol.rows(0, s).into_owned(), sol[s]))
    }
}

fn support_of(lambda: &DVector<f64>) -> Vec<usize> {
    lambda.iter().enumerate().filter(|(_, &l)| l > 0.0).map(|(i, _)| i).collect()
}

/// Prox of a general max-of-affine model via its simplex-constrained dual.
///
/// Stops when the primal-dual gap is at most `tol·(1 + |primal|)`.
pub fn prox_polyhedral(cuts: &[Cut], x: &DVector<f64>, rho: f64, tol: f64) -> Result<ProxResult> {
    check_rho(rho)?;
    if !(tol > 0.0) {
        return input(format!("prox tolerance must be positive, got {tol}"));
    }
    let m = cuts.len();
    if m == 0 {
        return input("prox_polyhedral needs at least one cut");
    }
    if cuts.iter().any(|c| c.slope.len() != x.len()) {
        return Err(BundleError::DimensionMismatch {
            expected: x.len(),
            got: cuts.iter().map(|c| c.slope.len()).find(|&l| l != x.len()).unwrap_or(0),
        });
    }
    if m == 1 {
        return prox_single(&cuts[0], x, rho);
    }

    let slopes = DMatrix::from_fn(m, x.len(), |i, j| cuts[i].slope[j]);
    let dual =
        Dual { gram: &slopes * slopes.transpose(), at_center: DVector::from_fn(m, |i, _| cuts[i].value(x)), rho, cuts };
    // Lipschitz constant of the dual gradient: λ_max(G)/ρ. Gershgorin gives
    // a guaranteed upper bound.
    let lip = (0..m).map(|i| dual.gram.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) / rho;

    let mut lambda = DVector::zeros(m);
    lambda[dual.at_center.imax()] = 1.0;
    let mut iterations = 0;
    let (mut gap, mut primal) = dual.gap(&lambda);
    // Keeps the regularization's effect on the gap well below `tol`.
    let reg = 1e-2 * tol * (1.0 + dual.at_center.amax());
    let warm = dual.active_set(&lambda, reg);
    let (wg, wp) = dual.gap(&warm);
    if wg < gap {
        (lambda, gap, primal) = (warm, wg, wp);
    }

    if lip > 0.0 {
        let step = 1.0 / lip;
        let mut y = lambda.clone();
        let mut t = 1.0_f64;
        while gap > tol * (1.0 + primal.abs()) {
            if iterations >= MAX_DUAL_ITERATIONS {
                return Err(BundleError::Solver { iterations, residual: gap });
            }
            iterations += 1;
            let grad_step = &y + dual.cut_values(&y) * step;
            let next = project_simplex(&grad_step);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            // Restart momentum when it stops helping.
            if (&next - &lambda).dot(&(-dual.cut_values(&y))) > 0.0 {
                y = next.clone();
                t = 1.0;
            } else {
                y = &next + (&next - &lambda) * ((t - 1.0) / t_next);
                t = t_next;
            }
            lambda = next;
            (gap, primal) = dual.gap(&lambda);
            if iterations % 10 == 0 {
                let candidate = if iterations % 200 == 0 {
                    Some(dual.active_set(&lambda, reg))
                } else {
                    dual.polish(&support_of(&lambda))
                };
                if let Some(p) = candidate {
                    let (pg, pp) = dual.gap(&p);
                    if pg < gap {
                        lambda = p;
                        y = lambda.clone();
                        t = 1.0;
                        (gap, primal) = (pg, pp);
                    }
                }
            }
        }
    }
    // Final exact solve on the support; keep it only if it is better.
    if let Some(p) = dual.polish(&support_of(&lambda)) {
        let (pg, _) = dual.gap(&p);
        if pg <= gap {
            lambda = p;
            gap = pg;
        }
    }

    let slope = slopes.tr_mul(&lambda);
    let intercept = (0..m).map(|i| lambda[i] * cuts[i].intercept).sum();
    let agg = Cut { slope, intercept, origin: crate::model::CutOrigin::Aggregate };
    let refs: Vec<&Cut> = cuts.iter().collect();
    let (z, value, aggregate_cut) = finish(&refs, agg, x, rho);
    Ok(ProxResult {
        z_next: z,
        model_value_at_z: value,
        aggregate_subgradient: aggregate_cut.slope.clone(),
        aggregate_cut,
        dual_weights: Some(lambda),
        theta: None,
        status: SolveStatus::Iterative { iterations, residual: gap },
    })
}

/// Which prox route ran.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxPath {
    Single,
    TwoCut,
    Polyhedral,
}

/// Route the prox step by model strategy: two-cut models use the closed
/// form, full-memory models the dual solver.
pub fn prox_model(model: &CutModel, x: &DVector<f64>, rho: f64, tol: f64) -> Result<ProxResult> {
    prox_model_with_path(model, x, rho, tol).map(|(r, _)| r)
}

pub fn prox_model_with_path(model: &CutModel, x: &DVector<f64>, rho: f64, tol: f64) -> Result<(ProxResult, ProxPath)> {
    let cuts = model.cuts();
    match (model.strategy(), cuts.len()) {
        (_, 1) => Ok((prox_single(&cuts[0], x, rho)?, ProxPath::Single)),
        (ModelStrategy::TwoCut, 2) => Ok((prox_two_cut(&cuts[0], &cuts[1], x, rho)?, ProxPath::TwoCut)),
        (ModelStrategy::TwoCut, n) => Err(BundleError::Internal(format!("two-cut model holds {n} cuts"))),
        (ModelStrategy::FullMemory { .. }, _) => Ok((prox_polyhedral(cuts, x, rho, tol)?, ProxPath::Polyhedral)),
    }
}

/// One-dimensional functions whose exact prox is known.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum ScalarFamily {
    /// `μ|x|`
    Abs { mu: f64 },
    /// `(c/2)x²`
    Quadratic { c: f64 },
    /// `μ|x|^p`
    Holder { mu: f64, p: f64 },
}

impl ScalarFamily {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ScalarFamily::Abs { mu } => mu * x.abs(),
            ScalarFamily::Quadratic { c } => 0.5 * c * x * x,
            ScalarFamily::Holder { mu, p } => mu * x.abs().powf(p),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarFamily::Abs { mu } => mu > 0.0,
            ScalarFamily::Quadratic { c } => c > 0.0,
            ScalarFamily::Holder { mu, p } => mu > 0.0 && p >= 1.0,
        };
        if ok {
            Ok(())
        } else {
            input(format!("unsupported scalar family parameters {self:?}"))
        }
    }

    /// Exact `argmin_z f(z) + (ρ/2)(z − x)²`.
    pub fn prox(&self, x: f64, rho: f64) -> f64 {
        match *self {
            ScalarFamily::Abs { mu } => x.signum() * (x.abs() - mu / rho).max(0.0),
            ScalarFamily::Quadratic { c } => rho * x / (c + rho),
            ScalarFamily::Holder { mu, p } if p == 1.0 => ScalarFamily::Abs { mu }.prox(x, rho),
            ScalarFamily::Holder { mu, p } if p == 2.0 => ScalarFamily::Quadratic { c: 2.0 * mu }.prox(x, rho),
            ScalarFamily::Holder { mu, p } => {
                // Optimality: μp z^{p−1} + ρ(z − |x|) = 0 on [0, |x|], increasing in z.
                let ax = x.abs();
                let (mut lo, mut hi) = (0.0_f64, ax);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid == lo || mid == hi {
                        break;
                    }
                    if mu * p * mid.powf(p - 1.0) + rho * (mid - ax) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let obj = |z: f64| mu * z.powf(p) + 0.5 * rho * (z - ax) * (z - ax);
                let z = if obj(lo) <= obj(hi) { lo } else { hi };
                x.signum() * z
            }
        }
    }
}

/// Exact proximal point `x̄` and proximal gap
/// `Δ = f(x) − (f(x̄) + (ρ/2)(x̄ − x)²)` for a one-dimensional family.
pub fn exact_prox_reference(family: ScalarFamily, x: f64, rho: f64) -> Result<(f64, f64)> {
    family.validate()?;
    check_rho(rho)?;
    let z = family.prox(x, rho);
    let delta = family.value(x) - (family.value(z) + 0.5 * rho * (z - x) * (z - x));
    Ok((z, delta.max(0.0)))
}
