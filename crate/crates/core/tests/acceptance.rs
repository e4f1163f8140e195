//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 5 6`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use proxbundle::harness::runner::SolverTrace;
use proxbundle::harness::verify::{check_parallel, check_serial, BoundContext};
use proxbundle::harness::{execute, ExperimentResult, ExperimentSpec, Verdict};
use proxbundle::oracle::SyntheticHolder;
use proxbundle::parallel::ParallelTrace;
use proxbundle::prox::{exact_prox_reference, prox_polyhedral, prox_two_cut, subproblem_objective, ScalarFamily};
use proxbundle::rng::stream;
use proxbundle::theory::{prox_gap_lower_bound, recurrence_steps, BoundForm};
use proxbundle::{
    bundle_step, run, BundleConfig, BundleState, Cut, Evaluator, ModelStrategy, Oracle, RunTrace, StepKind,
    StepsizePolicy,
};

const EPS_LIST: [f64; 3] = [1e-2, 1e-4, 1e-6];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> ExperimentSpec {
    ExperimentSpec::load(&config_path(name)).expect("config parses")
}

fn serial(result: &ExperimentResult, name: &str) -> RunTrace {
    match result.trace(name) {
        Some(SolverTrace::Serial(t)) => t.clone(),
        other => panic!("{name}: expected a serial trace, got {}", other.is_some()),
    }
}

fn parallel(result: &ExperimentResult, name: &str) -> ParallelTrace {
    match result.trace(name) {
        Some(SolverTrace::Parallel(t)) => t.clone(),
        _ => panic!("{name}: expected a parallel trace"),
    }
}

fn sharp_regression() -> &'static ExperimentResult {
    static CELL: OnceLock<ExperimentResult> = OnceLock::new();
    CELL.get_or_init(|| execute(&load("sharp-regression.json")).expect("sharp regression runs"))
}

fn normal_vec(rng: &mut impl Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn random_cut(rng: &mut impl Rng, d: usize) -> Cut {
    Cut::from_oracle(&normal_vec(rng, d, 1.0), rng.random_range(-1.0..1.0), normal_vec(rng, d, 1.0))
}

fn criterion_1() -> Outcome {
    let mut rng = stream(11, "acceptance-claim");
    let mut worst_obj = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for case in 0..1000 {
        let d = [1, 2, 5, 20][case % 4];
        let rho = 10f64.powf(rng.random_range(-3.0..3.0));
        let s = random_cut(&mut rng, d);
        let g = random_cut(&mut rng, d);
        let x = normal_vec(&mut rng, d, 1.0);
        let two = prox_two_cut(&s, &g, &x, rho).unwrap();
        let poly = prox_polyhedral(&[s.clone(), g.clone()], &x, rho, 1e-12).unwrap();
        let cuts = [s.clone(), g.clone()];
        let excess =
            subproblem_objective(&cuts, &x, rho, &two.z_next) - subproblem_objective(&cuts, &x, rho, &poly.z_next);
        worst_obj = worst_obj.max(excess);
        if excess > 1e-9 {
            failures.push(format!("case {case}: objective excess {excess:e}"));
        }

        let theta = two.theta.unwrap();
        let z = &two.z_next;
        let (vs, vg) = (s.value(z), g.value(z));
        let w = &g.slope * theta + &s.slope * (1.0 - theta);
        let certificate = if !(0.0..=1.0).contains(&theta) {
            false
        } else if theta == 1.0 {
            vg >= vs - 1e-9
        } else if theta == 0.0 {
            vs >= vg - 1e-9
        } else {
            (vs - vg).abs() <= 1e-9
        };
        let z_ok = (z - (&x - &w / rho)).amax() <= 1e-12 * (1.0 + z.amax());
        if !certificate || !z_ok {
            failures.push(format!("case {case}: certificate θ={theta} cuts at z {vs} {vg}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "1000 cases, worst objective excess {worst_obj:.1e}, {} failures {:?}",
            failures.len(),
            failures.first()
        ),
    )
}

/// Sample points around `center` at scales from 1e-3 to 10.
fn sample_points(rng: &mut impl Rng, center: &DVector<f64>, n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|_| {
            let r = 10f64.powf(rng.random_range(-3.0..1.0));
            center + normal_vec(rng, center.len(), r)
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let problems: Vec<(&str, SyntheticHolder)> = vec![
        ("|x|", SyntheticHolder::new(1.0, 1.0, 1).unwrap()),
        ("x²/2", SyntheticHolder::new(0.5, 2.0, 1).unwrap()),
        ("holder p=1", SyntheticHolder::new(1.0, 1.0, 3).unwrap()),
        ("holder p=1.5", SyntheticHolder::new(1.0, 1.5, 3).unwrap()),
        ("holder p=2", SyntheticHolder::new(1.0, 2.0, 3).unwrap()),
        ("holder p=3", SyntheticHolder::new(1.0, 3.0, 3).unwrap()),
    ];
    let models = [
        ModelStrategy::TwoCut,
        ModelStrategy::FullMemory { capacity: None },
        ModelStrategy::FullMemory { capacity: Some(4) },
    ];
    let mut rng = stream(12, "acceptance-assumption");
    let mut checks = 0usize;
    let mut failures = Vec::new();
    let tol = |v: f64| 1e-9 * v.abs().max(1.0);
    for (name, f) in &problems {
        for model in models {
            for policy in
                [StepsizePolicy::Constant { rho: 1.0 }, StepsizePolicy::OptHolder { mu: f.mu, p: f.p, f_star: 0.0 }]
            {
                let config = BundleConfig::new(policy.clone()).with_model(model);
                let mut ev = Evaluator::new(f);
                let x0 = normal_vec(&mut rng, f.dim, 2.0);
                let mut state = BundleState::initialize(&mut ev, x0, &config).unwrap();
                let mut last_null_rho: Option<f64> = None;
                for k in 0..40 {
                    if state.fx <= 1e-12 {
                        break;
                    }
                    let out = bundle_step(&mut state, &mut ev, &config).unwrap();
                    let (fz, gz) = f.evaluate(&out.prox.z_next);
                    let oracle_cut = Cut::from_oracle(&out.prox.z_next, fz, gz);
                    let center = state.x.clone();
                    for y in sample_points(&mut rng, &center, 1000) {
                        let m = state.model.value(&y);
                        let fy = f.evaluate(&y).0;
                        checks += 1;
                        if m > fy + tol(fy) {
                            failures.push(format!("{name} {model:?} k={k}: minorant {m} > {fy}"));
                        }
                        let c = oracle_cut.value(&y);
                        if m < c - tol(c) {
                            failures.push(format!("{name} {model:?} k={k}: below oracle cut"));
                        }
                        if out.kind == StepKind::Null {
                            let a = out.prox.aggregate_cut.value(&y);
                            if m < a - tol(a) {
                                failures.push(format!("{name} {model:?} k={k}: below aggregate cut"));
                            }
                        }
                    }
                    if out.kind == StepKind::Null {
                        if last_null_rho.is_some_and(|r| out.rho < r) {
                            failures.push(format!("{name} {model:?} k={k}: rho decreased across nulls"));
                        }
                        last_null_rho = Some(out.rho);
                    } else {
                        last_null_rho = None;
                    }
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("{checks} sampled points, {} violations {:?}", failures.len(), failures.first()),
    )
}

fn criterion_3() -> Outcome {
    let families = [
        ScalarFamily::Abs { mu: 1.0 },
        ScalarFamily::Quadratic { c: 1.0 },
        ScalarFamily::Holder { mu: 1.0, p: 1.5 },
        ScalarFamily::Holder { mu: 1.0, p: 3.0 },
    ];
    let mut failures: Vec<String> = Vec::new();
    let mut steps = 0usize;
    for family in families {
        let f = proxbundle::FnOracle::new(1, move |x: &DVector<f64>| {
            let t = x[0];
            let g = match family {
                ScalarFamily::Abs { mu } => mu * t.signum(),
                ScalarFamily::Quadratic { c } => c * t,
                ScalarFamily::Holder { mu, p } => mu * p * t.abs().powf(p - 1.0) * t.signum(),
            };
            (family.value(t), DVector::from_element(1, g))
        });
        for (rho, beta, x0) in [(0.5, 0.5, 3.0), (2.0, 0.3, -1.7), (0.05, 0.9, 0.8)] {
            let config = BundleConfig::new(StepsizePolicy::Constant { rho }).with_beta(beta);
            let mut ev = Evaluator::new(&f);
            let mut state = BundleState::initialize(&mut ev, DVector::from_element(1, x0), &config).unwrap();
            let mut prev_model_gap: Option<f64> = None;
            for k in 0..100 {
                let x = state.x[0];
                let fx = state.fx;
                if fx <= 1e-14 {
                    break;
                }
                let (_, delta) = exact_prox_reference(family, x, rho).unwrap();
                let lower = prox_gap_lower_bound(fx, x.abs(), rho);
                if delta < lower - 1e-12 * lower.max(1.0) {
                    failures.push(format!("{family:?} k={k}: exact gap {delta} below lower bound {lower}"));
                }
                let out = bundle_step(&mut state, &mut ev, &config).unwrap();
                steps += 1;
                let z = out.prox.z_next[0];
                let model_gap = fx - (out.prox.model_value_at_z + 0.5 * rho * (z - x) * (z - x));
                match out.kind {
                    StepKind::Descent => {
                        if state.fx > fx - beta * delta + 1e-9 {
                            failures.push(format!("{family:?} k={k}: descent decrease too small"));
                        }
                        prev_model_gap = None;
                    }
                    _ => {
                        if prev_model_gap.is_some_and(|p| model_gap > p + 1e-12 * p.abs().max(1.0)) {
                            failures.push(format!("{family:?} k={k}: model gap grew within a null run"));
                        }
                        prev_model_gap = Some(model_gap);
                    }
                }
            }
        }
    }

    let mut rng = stream(13, "acceptance-recurrence");
    let mut cases = 0;
    while cases < 100 {
        let alpha = rng.random_range(1e-3..=1.0);
        let q = rng.random_range(1.0..=3.0);
        if q <= 1.0 {
            continue;
        }
        let eps = 10f64.powf(rng.random_range(-3.0..-1.0));
        let bound = match recurrence_steps(alpha, q, eps) {
            Ok(b) if b <= 1_000_000 => b,
            _ => continue,
        };
        // Start where the recurrence keeps δ nonnegative.
        let cap = alpha.powf(-1.0 / (q - 1.0));
        let delta0 = rng.random_range(eps..=cap.max(eps * 1.01));
        let mut delta: f64 = delta0;
        let mut n = 0u64;
        while delta > eps && n <= bound {
            delta -= alpha * delta.powf(q);
            n += 1;
        }
        if n > bound {
            failures.push(format!("recurrence α={alpha} q={q} ε={eps} δ₀={delta0}: {n} > {bound}"));
        }
        cases += 1;
    }
    outcome(
        failures.is_empty(),
        format!("{steps} bundle steps, 100 recurrences, {} violations {:?}", failures.len(), failures.first()),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = stream(14, "acceptance-ceilings");
    let (mut pass, mut skip, mut fail) = (0, 0, 0);
    let mut first_fail = None;
    for p in [1.0, 2.0, 3.0] {
        let f = SyntheticHolder::new(1.0, p, 5).unwrap();
        let x0 = normal_vec(&mut rng, 5, 1.0);
        let f_x0 = f.evaluate(&x0).0;
        let dist0_sq = x0.norm_squared();
        let c = f.constants();
        for beta in [0.3, 0.5, 0.9] {
            let ctx = BoundContext {
                m: Some(f.lipschitz_on_ball(x0.norm())),
                l: c.smooth_l,
                mu: c.growth_mu,
                p: c.growth_p,
                gap0: f_x0,
                dist0_sq: Some(dist0_sq),
                level_dist_sq: Some(dist0_sq),
                beta,
            };
            let mut policies: Vec<StepsizePolicy> =
                [0.1, 1.0, 10.0].iter().map(|&rho| StepsizePolicy::Constant { rho }).collect();
            policies.push(StepsizePolicy::OptGeneral { d_sq: dist0_sq, f_star: 0.0 });
            policies.push(StepsizePolicy::OptHolder { mu: 1.0, p, f_star: 0.0 });
            for policy in policies {
                let config = BundleConfig::new(policy.clone())
                    .with_beta(beta)
                    .with_f_star(0.0)
                    .with_target_gap(1e-6)
                    .with_max_iterations(20_000);
                let out = run(&f, &config, x0.clone()).unwrap();
                for eps in EPS_LIST {
                    for check in check_serial("run", &policy, &out.trace, &ctx, eps, BoundForm::Simplified) {
                        match check.verdict {
                            Verdict::Pass => pass += 1,
                            Verdict::Skip => skip += 1,
                            Verdict::Fail => {
                                fail += 1;
                                first_fail.get_or_insert(format!("p={p} β={beta} {policy:?}: {check}"));
                            }
                        }
                    }
                }
            }
        }
    }
    outcome(fail == 0 && pass > 0, format!("{pass} within bounds, {skip} skipped, {fail} exceeded {first_fail:?}"))
}

fn nonincreasing(values: impl IntoIterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.into_iter().collect();
    v.windows(2).all(|w| w[1] <= w[0])
}

fn criterion_5() -> Outcome {
    let result = sharp_regression();
    let ideal = serial(result, "ideal");
    let par = parallel(result, "parallel");
    let ideal_gap = ideal.records.last().and_then(|r| r.gap).unwrap();
    let par_gap = par.summary.best_gap.unwrap();
    let monotone = nonincreasing(ideal.records.iter().map(|r| r.f)) && nonincreasing(par.best.iter().map(|r| r.best_f));
    let ok = ideal.summary.iterations == 150
        && par.summary.rounds == 150
        && ideal_gap <= 1e-12
        && par_gap <= 1e-8
        && monotone;
    outcome(ok, format!("ideal final gap {ideal_gap:.2e}, parallel best gap {par_gap:.2e}, monotone {monotone}"))
}

fn leaders() -> (Vec<usize>, usize) {
    let par = parallel(sharp_regression(), "parallel");
    (par.leader_series().into_iter().flatten().collect(), par.summary.instances - 1)
}

fn criterion_6() -> Outcome {
    let (series, top) = leaders();
    let saturated = series.iter().position(|&j| j == top).unwrap_or(series.len());
    let drops = series[..saturated].windows(2).filter(|w| w[1] < w[0]).count();
    outcome(
        drops == 0 && saturated < series.len(),
        format!("leader index decreases {drops} times before first reaching instance {top}"),
    )
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

/// Weaker reading of criterion 6: the leader trends up the ladder (rank
/// correlation with the round) and ends on the top rung.
fn criterion_6_trend() -> Outcome {
    let (series, top) = leaders();
    let rounds: Vec<f64> = (0..series.len()).map(|k| k as f64).collect();
    let levels: Vec<f64> = series.iter().map(|&j| j as f64).collect();
    let (slope, r2) = linear_fit(&ranks(&rounds), &ranks(&levels));
    let spearman = slope.signum() * r2.sqrt();
    let held = series.iter().rev().take_while(|&&j| j == top).count();
    outcome(
        spearman >= 0.9 && held >= 50,
        format!("rank correlation with round {spearman:.3}, top instance {top} held for the last {held} rounds"),
    )
}

/// Least-squares slope and R² of `ys` against `xs`.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, slope * sxy / syy)
}

fn criterion_7() -> Outcome {
    let result = execute(&load("misspecification.json")).unwrap();
    let gap_at = |t: &RunTrace, k: usize| t.records.iter().find(|r| r.k == k).and_then(|r| r.gap).unwrap();
    let correct = serial(&result, "mu-correct");
    let correct_150 = gap_at(&correct, 150);
    let mut ok = true;
    let mut parts = vec![format!("correct gap@150 {correct_150:.1e}")];
    for name in ["mu-third", "mu-triple"] {
        let t = serial(&result, name);
        let (xs, ys): (Vec<f64>, Vec<f64>) = t
            .records
            .iter()
            .filter(|r| (10..=150).contains(&r.k))
            .map(|r| (r.k as f64, r.gap.unwrap().max(f64::MIN_POSITIVE).log10()))
            .unzip();
        let (slope, r2) = linear_fit(&xs, &ys);
        let g150 = gap_at(&t, 150);
        ok &= slope < 0.0 && r2 > 0.95 && g150 >= correct_150;
        parts.push(format!("{name} slope {slope:.3} R² {r2:.3} gap@150 {g150:.1e}"));
    }
    outcome(ok, parts.join(", "))
}

fn criterion_8() -> Outcome {
    let spec = load("verify-bounds.json");
    let result = execute(&spec).unwrap();
    let report = &result.result("parallel").unwrap().report;
    let trace = parallel(&result, "parallel");
    let rho_bar = report.parameters["rho_bar"].as_f64().unwrap();
    let instances = report.parameters["instances"].as_u64().unwrap() as usize;
    let reference = result.summary.reference.as_ref().unwrap();
    let ctx = BoundContext::from_problem(&result.problem, &result.x0, result.summary.f_x0, reference.f_star, spec.beta);
    let check = check_parallel("parallel", &trace, rho_bar, instances, &ctx, 1e-6, BoundForm::Simplified);
    let s = &trace.summary;
    let accounting = s.step_oracle_calls == s.rounds * instances
        && s.oracle_calls == s.initial_oracle_calls + s.step_oracle_calls + s.adoption_oracle_calls;
    outcome(
        check.verdict == Verdict::Pass && accounting,
        format!(
            "ρ̄={rho_bar:.3e} J={instances}: {check}; oracle calls {} = {} rounds × {instances} + {} initial, adoption {}",
            s.oracle_calls, s.rounds, s.initial_oracle_calls, s.adoption_oracle_calls
        ),
    )
}

fn criterion_9() -> Outcome {
    let result = execute(&load("svm.json")).unwrap();
    let reference = result.summary.reference.clone().unwrap();
    let par = &result.result("parallel").unwrap().report;
    let peg = &result.result("pegasos").unwrap().report;
    let rel = |g: f64| g / reference.f_star.abs().max(1e-300);
    let (gp, gq) = (par.best_gap.unwrap(), peg.best_gap.unwrap());
    let ok = reference.certified && par.oracle_calls == peg.oracle_calls && rel(gp) <= 1e-2 && rel(gq) <= 1e-2;
    outcome(
        ok,
        format!(
            "f*={:.10} certified {}, parallel gap {gp:.2e} ({} calls), pegasos gap {gq:.2e} ({} calls)",
            reference.f_star, reference.certified, par.oracle_calls, peg.oracle_calls
        ),
    )
}

fn criterion_10() -> Outcome {
    let result = execute(&load("logsumexp.json")).unwrap();
    let par = &result.result("parallel").unwrap().report;
    let gd = &result.result("gd").unwrap().report;
    let agd = &result.result("agd").unwrap().report;
    let (gp, gg) = (par.best_gap.unwrap(), gd.best_gap.unwrap());
    let ok = gp <= gg && par.oracle_calls <= 2000 && gd.oracle_calls == 2000;
    outcome(
        ok,
        format!(
            "parallel gap {gp:.2e} ({} calls), gd gap {gg:.2e} ({} calls), agd gap {:.2e} (not asserted)",
            par.oracle_calls,
            gd.oracle_calls,
            agd.best_gap.unwrap_or(f64::NAN)
        ),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1", "two-cut prox vs polyhedral prox", criterion_1),
        ("2", "model update invariants", criterion_2),
        ("3", "descent, null-run and recurrence lemmas", criterion_3),
        ("4", "step-count ceilings", criterion_4),
        ("5", "sharp regression convergence", criterion_5),
        ("6", "leader index nondecreasing until saturation", criterion_6),
        ("6b", "leader climbs the ladder and holds the top", criterion_6_trend),
        ("7", "misspecified growth still linear", criterion_7),
        ("8", "parallel round bound and oracle accounting", criterion_8),
        ("9", "SVM at equal oracle budgets", criterion_9),
        ("10", "log-sum-exp against gradient descent", criterion_10),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, title, f) in criteria {
        if !filters.is_empty() && !filters.iter().any(|x| x == id || id.trim_end_matches('b') == x) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id} ({title}): {} [{:.1}s]", result.detail, start.elapsed().as_secs_f64());
        if !result.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {}", failed.join(", "));
        std::process::exit(1);
    }
}
