//! Synchronous parallel bundle method: `J` constant-stepsize instances on a
//! geometric ladder that share their best iterate after every round.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{bundle_step, BundleConfig, BundleState, RunStatus, StepOutcome, StepsizePolicy, StopReason};
use crate::error::{input, BundleError, Result};
use crate::model::ModelStrategy;
use crate::oracle::{Evaluator, Oracle};
use crate::trace::{fmt_f64, fmt_opt, RunTrace, StepKind, TraceRecord};

/// Which best iterate instances jump to in the communication round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdoptionRule {
    /// The best center from before the round's steps.
    #[default]
    PreStep,
    /// The best center after the round's steps.
    PostStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParallelConfig {
    /// Smallest stepsize; instance `j` uses `ratio^j · rho_bar`.
    pub rho_bar: f64,
    pub instances: usize,
    pub ratio: f64,
    pub beta: f64,
    /// Number of rounds.
    pub max_iterations: usize,
    pub target_gap: Option<f64>,
    pub f_star: Option<f64>,
    pub model: ModelStrategy,
    pub prox_tol: f64,
    /// Step the instances on the rayon pool. Results are identical either way.
    pub fan_out: bool,
    #[serde(default)]
    pub adoption: AdoptionRule,
}

impl ParallelConfig {
    pub fn new(rho_bar: f64, instances: usize) -> Self {
        ParallelConfig {
            rho_bar,
            instances,
            ratio: 2.0,
            beta: crate::engine::DEFAULT_BETA,
            max_iterations: 1000,
            target_gap: None,
            f_star: None,
            model: ModelStrategy::TwoCut,
            prox_tol: crate::engine::DEFAULT_PROX_TOL,
            fan_out: false,
            adoption: AdoptionRule::PreStep,
        }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_max_iterations(mut self, rounds: usize) -> Self {
        self.max_iterations = rounds;
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

    pub fn with_adoption(mut self, rule: AdoptionRule) -> Self {
        self.adoption = rule;
        self
    }

    pub fn with_fan_out(mut self, fan_out: bool) -> Self {
        self.fan_out = fan_out;
        self
    }

    pub fn rho(&self, j: usize) -> f64 {
        self.ratio.powi(j as i32) * self.rho_bar
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_bar > 0.0 && self.rho_bar.is_finite()) {
            return input(format!("rho_bar must be positive, got {}", self.rho_bar));
        }
        if self.instances == 0 {
            return input("at least one instance is required");
        }
        if !(self.ratio > 1.0) {
            return input(format!("stepsize ratio must exceed 1, got {}", self.ratio));
        }
        if !self.rho(self.instances - 1).is_finite() {
            return input("largest stepsize overflows");
        }
        self.instance_config(0).validate()
    }

    /// Serial configuration of instance `j`.
    pub fn instance_config(&self, j: usize) -> BundleConfig {
        let mut c = BundleConfig::new(StepsizePolicy::Constant { rho: self.rho(j) })
            .with_beta(self.beta)
            .with_model(self.model)
            .with_max_iterations(self.max_iterations.max(1))
            .with_prox_tol(self.prox_tol);
        c.f_star = self.f_star;
        c
    }
}

/// All instances plus the round counter.
#[derive(Clone, Debug)]
pub struct ParallelState {
    pub instances: Vec<BundleState>,
    configs: Vec<BundleConfig>,
    pub round: usize,
    /// Oracle calls made by the instance steps.
    pub step_calls: usize,
    /// The single evaluation at `x₀` shared by every instance.
    pub initial_calls: usize,
}

impl ParallelState {
    /// Evaluate the oracle once at `x0` and start every instance there with
    /// the single cut at `x0`.
    pub fn initialize(oracle: &dyn Oracle, config: &ParallelConfig, x0: DVector<f64>) -> Result<Self> {
        config.validate()?;
        let mut ev = Evaluator::new(oracle);
        let e = ev.eval(&x0)?;
        let configs: Vec<BundleConfig> = (0..config.instances).map(|j| config.instance_config(j)).collect();
        let instances = configs
            .iter()
            .map(|c| BundleState::from_evaluation(x0.clone(), e.value, e.subgradient.clone(), c))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParallelState { instances, configs, round: 0, step_calls: 0, initial_calls: 1 })
    }

    pub fn oracle_calls(&self) -> usize {
        self.initial_calls + self.step_calls
    }

    /// Index of the lowest objective value (ties go to the lowest index).
    pub fn best_index(&self) -> usize {
        argmin(self.instances.iter().map(|s| s.fx))
    }

    pub fn best_value(&self) -> f64 {
        self.instances[self.best_index()].fx
    }
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, v) in values.enumerate() {
        if v < best.1 {
            best = (j, v);
        }
    }
    best.0
}

/// What one round did.
#[derive(Clone, Debug)]
pub struct RoundReport {
    pub round: usize,
    pub outcomes: Vec<StepOutcome>,
    /// `j*`, the instance whose center was shared.
    pub source: usize,
    pub adopted: Vec<bool>,
    /// Lowest value produced by the round's steps and the instance producing it.
    pub step_best: (usize, f64),
}

/// One synchronous round: every instance takes a bundle step, then every
/// instance that just took a descent step but is worse than the best
/// pre-round center jumps to that center.
pub fn parallel_round(state: &mut ParallelState, oracle: &dyn Oracle, config: &ParallelConfig) -> Result<RoundReport> {
    let pre_source = state.best_index();
    let snapshot = |st: &ParallelState, j: usize| {
        let s = &st.instances[j];
        (s.x.clone(), s.fx, s.gx.clone())
    };
    let pre = snapshot(state, pre_source);

    let step = |(j, (st, cfg)): (usize, (&mut BundleState, &BundleConfig))| {
        let mut ev = Evaluator::new(oracle);
        bundle_step(st, &mut ev, cfg).map_err(|e| BundleError::Instance { instance: j, source: Box::new(e) })
    };
    let results: Vec<Result<StepOutcome>> = if config.fan_out {
        state.instances.par_iter_mut().zip(state.configs.par_iter()).enumerate().map(step).collect()
    } else {
        state.instances.iter_mut().zip(state.configs.iter()).enumerate().map(step).collect()
    };
    state.step_calls += results.len();
    state.round += 1;
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let step_best = {
        let j = argmin(state.instances.iter().map(|s| s.fx));
        (j, state.instances[j].fx)
    };
    let (source, (src_x, src_f, src_g)) = match config.adoption {
        AdoptionRule::PreStep => (pre_source, pre),
        AdoptionRule::PostStep => (step_best.0, snapshot(state, step_best.0)),
    };
    let mut adopted = vec![false; state.instances.len()];
    for (j, (st, cfg)) in state.instances.iter_mut().zip(&state.configs).enumerate() {
        if outcomes[j].kind == StepKind::Descent && src_f < st.fx {
            st.adopt(src_x.clone(), src_f, src_g.clone(), cfg)?;
            adopted[j] = true;
        }
    }
    Ok(RoundReport { round: state.round, outcomes, source, adopted, step_best })
}

/// One row per instance per round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub round: usize,
    pub instance: usize,
    pub step_type: StepKind,
    /// Value at the instance's center after the round (after adoption).
    pub f: f64,
    pub gap: Option<f64>,
    pub rho: f64,
    /// Cumulative oracle calls of the whole method.
    pub oracle_calls: usize,
    pub agg_norm: Option<f64>,
    pub adopted: bool,
    pub leader: Option<usize>,
}

/// One row per round for the best iterate across instances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub round: usize,
    pub best_f: f64,
    pub best_gap: Option<f64>,
    /// Instance whose step most recently lowered the best value.
    pub leader: Option<usize>,
    pub leader_rho: Option<f64>,
    pub oracle_calls: usize,
    pub adoptions: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParallelSummary {
    pub rounds: usize,
    pub instances: usize,
    pub descent_count: usize,
    pub null_count: usize,
    pub adoptions: usize,
    pub best_f: f64,
    pub best_gap: Option<f64>,
    /// Total oracle calls: the shared initial call plus `rounds × J`.
    pub oracle_calls: usize,
    pub step_oracle_calls: usize,
    pub initial_oracle_calls: usize,
    /// Adoption reuses cached evaluations, so this stays zero.
    pub adoption_oracle_calls: usize,
    pub wall_time_secs: f64,
    pub stop_reason: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParallelTrace {
    pub instances: Vec<InstanceRecord>,
    pub best: Vec<BestRecord>,
    pub summary: ParallelSummary,
}

impl ParallelTrace {
    pub fn write_instances_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "k",
            "instance_id",
            "step_type",
            "f",
            "gap",
            "rho",
            "oracle_calls",
            "agg_norm",
            "adopted",
            "leader_instance",
        ])?;
        for r in &self.instances {
            w.write_record([
                r.round.to_string(),
                r.instance.to_string(),
                r.step_type.as_str().to_string(),
                fmt_f64(r.f),
                fmt_opt(r.gap),
                fmt_f64(r.rho),
                r.oracle_calls.to_string(),
                fmt_opt(r.agg_norm),
                r.adopted.to_string(),
                r.leader.map(|l| l.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_best_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "best_f", "best_gap", "leader_instance", "leader_rho", "oracle_calls", "adoptions"])?;
        for r in &self.best {
            w.write_record([
                r.round.to_string(),
                fmt_f64(r.best_f),
                fmt_opt(r.best_gap),
                r.leader.map(|l| l.to_string()).unwrap_or_default(),
                fmt_opt(r.leader_rho),
                r.oracle_calls.to_string(),
                r.adoptions.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, instances_path: &Path, best_path: &Path) -> Result<()> {
        self.write_instances_csv(std::io::BufWriter::new(std::fs::File::create(instances_path)?))?;
        self.write_best_csv(std::io::BufWriter::new(std::fs::File::create(best_path)?))
    }

    /// Per-instance trace in the serial schema (rows of one instance only).
    pub fn instance_trace(&self, j: usize) -> RunTrace {
        let mut t = RunTrace::default();
        for r in self.instances.iter().filter(|r| r.instance == j) {
            t.push(TraceRecord {
                k: r.round,
                step_type: r.step_type,
                f: r.f,
                gap: r.gap,
                rho: r.rho,
                oracle_calls: r.oracle_calls,
                agg_norm: r.agg_norm,
            });
        }
        t.finalize(self.summary.stop_reason.clone(), self.summary.wall_time_secs);
        t
    }

    /// Best iterate as a serial-schema trace, handy for comparisons on the
    /// oracle-call axis.
    pub fn best_trace(&self) -> RunTrace {
        let mut t = RunTrace::default();
        for r in &self.best {
            t.push(TraceRecord {
                k: r.round,
                step_type: if r.round == 0 { StepKind::Init } else { StepKind::Step },
                f: r.best_f,
                gap: r.best_gap,
                rho: r.leader_rho.unwrap_or(f64::NAN),
                oracle_calls: r.oracle_calls,
                agg_norm: None,
            });
        }
        t.finalize(self.summary.stop_reason.clone(), self.summary.wall_time_secs);
        t
    }

    pub fn best_gap_series(&self) -> Vec<Option<f64>> {
        self.best.iter().map(|r| r.best_gap).collect()
    }

    pub fn leader_series(&self) -> Vec<Option<usize>> {
        self.best.iter().map(|r| r.leader).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ParallelOutcome {
    pub trace: ParallelTrace,
    pub x_best: DVector<f64>,
    pub f_best: f64,
    pub status: RunStatus,
}

/// Run rounds until the best gap reaches the target or the round budget
/// runs out.
pub fn parallel_run(oracle: &dyn Oracle, config: &ParallelConfig, x0: DVector<f64>) -> Result<ParallelOutcome> {
    let start = Instant::now();
    let mut state = ParallelState::initialize(oracle, config, x0)?;
    let gap = |f: f64| config.f_star.map(|fs| f - fs);
    let mut trace = ParallelTrace::default();
    let mut leader: Option<usize> = None;
    let mut best_f = state.best_value();
    let mut adoptions = 0;

    for (j, st) in state.instances.iter().enumerate() {
        trace.instances.push(InstanceRecord {
            round: 0,
            instance: j,
            step_type: StepKind::Init,
            f: st.fx,
            gap: gap(st.fx),
            rho: st.rho,
            oracle_calls: state.oracle_calls(),
            agg_norm: None,
            adopted: false,
            leader: None,
        });
    }
    trace.best.push(BestRecord {
        round: 0,
        best_f,
        best_gap: gap(best_f),
        leader: None,
        leader_rho: None,
        oracle_calls: state.oracle_calls(),
        adoptions: 0,
    });

    let reached = |f: f64| matches!((gap(f), config.target_gap), (Some(g), Some(eps)) if g <= eps);
    let mut status = RunStatus::Stopped(StopReason::MaxIterations);
    if reached(best_f) {
        status = RunStatus::Stopped(StopReason::TargetGap);
    } else {
        while state.round < config.max_iterations {
            let report = match parallel_round(&mut state, oracle, config) {
                Ok(r) => r,
                Err(e) => {
                    status = RunStatus::Failed(e.to_string());
                    break;
                }
            };
            let (j_best, f_step) = report.step_best;
            if f_step < best_f {
                best_f = f_step;
                leader = Some(j_best);
            }
            let round_adoptions = report.adopted.iter().filter(|&&a| a).count();
            adoptions += round_adoptions;
            for (j, st) in state.instances.iter().enumerate() {
                let o = &report.outcomes[j];
                trace.instances.push(InstanceRecord {
                    round: state.round,
                    instance: j,
                    step_type: o.kind,
                    f: st.fx,
                    gap: gap(st.fx),
                    rho: o.rho,
                    oracle_calls: state.oracle_calls(),
                    agg_norm: Some(o.agg_norm),
                    adopted: report.adopted[j],
                    leader,
                });
            }
            trace.best.push(BestRecord {
                round: state.round,
                best_f,
                best_gap: gap(best_f),
                leader,
                leader_rho: leader.map(|l| config.rho(l)),
                oracle_calls: state.oracle_calls(),
                adoptions: round_adoptions,
            });
            if reached(best_f) {
                status = RunStatus::Stopped(StopReason::TargetGap);
                break;
            }
        }
    }

    let descents = trace.instances.iter().filter(|r| r.step_type == StepKind::Descent).count();
    let nulls = trace.instances.iter().filter(|r| r.step_type == StepKind::Null).count();
    trace.summary = ParallelSummary {
        rounds: state.round,
        instances: config.instances,
        descent_count: descents,
        null_count: nulls,
        adoptions,
        best_f,
        best_gap: gap(best_f),
        oracle_calls: state.oracle_calls(),
        step_oracle_calls: state.step_calls,
        initial_oracle_calls: state.initial_calls,
        adoption_oracle_calls: 0,
        wall_time_secs: start.elapsed().as_secs_f64(),
        stop_reason: match &status {
            RunStatus::Stopped(r) => r.as_str().to_string(),
            RunStatus::Failed(m) => format!("failed: {m}"),
        },
    };
    let b = state.best_index();
    Ok(ParallelOutcome { x_best: state.instances[b].x.clone(), f_best: state.instances[b].fx, trace, status })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::oracle::SyntheticHolder;

    fn dv(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn stepsize_ladder() {
        let c = ParallelConfig::new(0.5, 4).with_ratio(10.0);
        assert_eq!(c.rho(0), 0.5);
        assert_eq!(c.rho(3), 500.0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ParallelConfig::new(0.0, 3).validate().is_err());
        assert!(ParallelConfig::new(1.0, 0).validate().is_err());
        assert!(ParallelConfig::new(1.0, 3).with_ratio(1.0).validate().is_err());
        assert!(ParallelConfig::new(1.0, 3).with_beta(1.0).validate().is_err());
    }

    #[test]
    fn single_instance_matches_serial() {
        let f = SyntheticHolder::new(1.0, 1.5, 3).unwrap();
        let x0 = dv(&[1.0, -0.5, 2.0]);
        let pc = ParallelConfig::new(0.8, 1).with_max_iterations(80);
        let par = parallel_run(&f, &pc, x0.clone()).unwrap();
        let ser = run(&f, &pc.instance_config(0), x0).unwrap();
        let a: Vec<(StepKind, u64)> = par.trace.instances.iter().map(|r| (r.step_type, r.f.to_bits())).collect();
        let b: Vec<(StepKind, u64)> = ser.trace.records.iter().map(|r| (r.step_type, r.f.to_bits())).collect();
        assert_eq!(a, b);
        assert_eq!(par.trace.summary.adoptions, 0);
    }

    #[test]
    fn two_instance_round_on_abs() {
        let f = SyntheticHolder::new(1.0, 1.0, 1).unwrap();
        let pc = ParallelConfig::new(1.0, 2);
        let mut st = ParallelState::initialize(&f, &pc, dv(&[1.0])).unwrap();
        let report = parallel_round(&mut st, &f, &pc).unwrap();
        assert_eq!(report.outcomes[0].prox.z_next[0], 0.0);
        assert_eq!(report.outcomes[1].prox.z_next[0], 0.5);
        assert_eq!(report.source, 0);
        // Both step from the same center, so nobody beats j*'s pre-round value.
        assert_eq!(report.adopted, vec![false, false]);
        assert_eq!(st.oracle_calls(), 3);
        assert_eq!(st.instances[1].x[0], 0.5);
        let report = parallel_round(&mut st, &f, &pc).unwrap();
        assert_eq!(report.source, 0);
        if report.outcomes[1].kind == StepKind::Descent {
            assert_eq!(st.instances[1].fx, 0.0);
        }
    }

    #[test]
    fn adoption_resets_model_to_single_cut() {
        let f = SyntheticHolder::new(1.0, 1.0, 1).unwrap();
        let pc = ParallelConfig::new(1.0, 2);
        let mut st = ParallelState::initialize(&f, &pc, dv(&[1.0])).unwrap();
        parallel_round(&mut st, &f, &pc).unwrap();
        let report = parallel_round(&mut st, &f, &pc).unwrap();
        assert_eq!(report.source, 0);
        assert_eq!(st.instances[0].x[0], 0.0);
        if report.adopted[1] {
            assert_eq!(st.instances[1].x[0], 0.0);
            assert_eq!(st.instances[1].model.len(), 1);
        }
    }

    #[test]
    fn symmetric_instances_never_adopt() {
        let f = SyntheticHolder::new(1.0, 2.0, 2).unwrap();
        let pc = ParallelConfig::new(1.0, 3);
        let mut st = ParallelState::initialize(&f, &pc, dv(&[1.0, 1.0])).unwrap();
        // Give every instance the same stepsize.
        st.configs = vec![pc.instance_config(0); 3];
        for s in &mut st.instances {
            s.rho = pc.rho(0);
        }
        for _ in 0..20 {
            let report = parallel_round(&mut st, &f, &pc).unwrap();
            assert_eq!(report.source, 0);
            assert!(report.adopted.iter().all(|&a| !a));
            let z0 = &report.outcomes[0].prox.z_next;
            assert!(report.outcomes.iter().all(|o| &o.prox.z_next == z0));
        }
    }

    #[test]
    fn fan_out_is_bit_identical() {
        let f = SyntheticHolder::new(2.0, 1.0, 4).unwrap();
        let x0 = dv(&[1.0, 2.0, -1.0, 0.5]);
        let pc = ParallelConfig::new(0.01, 6).with_ratio(4.0).with_max_iterations(60).with_f_star(0.0);
        let a = parallel_run(&f, &pc, x0.clone()).unwrap();
        let b = parallel_run(&f, &pc.clone().with_fan_out(true), x0).unwrap();
        assert_eq!(a.trace.instances, b.trace.instances);
        assert_eq!(a.trace.best, b.trace.best);
    }

    #[test]
    fn oracle_accounting() {
        let f = SyntheticHolder::new(1.0, 1.0, 2).unwrap();
        let pc = ParallelConfig::new(0.1, 3).with_max_iterations(25);
        let out = parallel_run(&f, &pc, dv(&[1.0, 1.0])).unwrap();
        let s = &out.trace.summary;
        assert_eq!(s.oracle_calls, 1 + 25 * 3);
        assert_eq!(s.descent_count + s.null_count, 75);
    }

    #[test]
    fn monotone_per_instance_and_best() {
        let f = SyntheticHolder::new(1.0, 1.2, 3).unwrap();
        let pc = ParallelConfig::new(0.01, 5).with_ratio(3.0).with_max_iterations(100).with_f_star(0.0);
        let out = parallel_run(&f, &pc, dv(&[1.0, -2.0, 0.3])).unwrap();
        for j in 0..5 {
            let fs: Vec<f64> = out.trace.instances.iter().filter(|r| r.instance == j).map(|r| r.f).collect();
            assert!(fs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
        assert!(out.trace.best.windows(2).all(|w| w[1].best_f <= w[0].best_f));
        for r in out.trace.instances.iter().filter(|r| r.adopted) {
            assert_eq!(r.step_type, StepKind::Descent);
        }
    }
}
