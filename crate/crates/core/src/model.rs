//! Cutting-plane models: a max of affine minorants of the objective.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::prox::ProxResult;

/// Where a cut came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutOrigin {
    Oracle,
    Aggregate,
}

/// Affine function `z ↦ intercept + ⟨slope, z⟩`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub slope: DVector<f64>,
    pub intercept: f64,
    pub origin: CutOrigin,
}

impl Cut {
    /// The oracle cut `f(z) + ⟨g, · − z⟩`.
    pub fn from_oracle(point: &DVector<f64>, value: f64, subgradient: DVector<f64>) -> Self {
        let intercept = value - subgradient.dot(point);
        Cut { slope: subgradient, intercept, origin: CutOrigin::Oracle }
    }

    /// The affine function `value + ⟨slope, · − point⟩` tagged as an aggregate.
    pub fn aggregate_at(point: &DVector<f64>, value: f64, slope: DVector<f64>) -> Self {
        let intercept = value - slope.dot(point);
        Cut { slope, intercept, origin: CutOrigin::Aggregate }
    }

    #[inline]
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        self.intercept + self.slope.dot(z)
    }

    /// `θ·self + (1−θ)·other`, tagged as an aggregate.
    pub fn combine(&self, other: &Cut, theta: f64) -> Cut {
        Cut {
            slope: &self.slope * theta + &other.slope * (1.0 - theta),
            intercept: theta * self.intercept + (1.0 - theta) * other.intercept,
            origin: CutOrigin::Aggregate,
        }
    }

    fn same_as(&self, other: &Cut) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs()));
        close(self.intercept, other.intercept)
            && self.slope.len() == other.slope.len()
            && self.slope.iter().zip(other.slope.iter()).all(|(a, b)| close(*a, *b))
    }
}

/// How the model is refreshed after each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelStrategy {
    /// Aggregate cut plus the newest oracle cut; closed-form prox.
    TwoCut,
    /// Every oracle cut (oldest evicted past `capacity`) plus the latest
    /// aggregate cut.
    FullMemory { capacity: Option<usize> },
}

impl ModelStrategy {
    pub fn validate(&self) -> Result<()> {
        if let ModelStrategy::FullMemory { capacity: Some(c) } = self {
            if *c < 2 {
                return input(format!("FullMemory capacity must be at least 2, got {c}"));
            }
        }
        Ok(())
    }
}

/// The bundle model `f_k(z) = max_j cut_j(z)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CutModel {
    cuts: Vec<Cut>,
    strategy: ModelStrategy,
}

impl CutModel {
    /// Fresh model holding the single cut `f(x₀) + ⟨g₀, · − x₀⟩`.
    pub fn new(strategy: ModelStrategy, first: Cut) -> Result<Self> {
        strategy.validate()?;
        Ok(CutModel { cuts: vec![first], strategy })
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn strategy(&self) -> ModelStrategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// `max_j cut_j(z)`.
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        self.cuts.iter().map(|c| c.value(z)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Refresh after a null step at `z_{k+1}`.
    ///
    /// The new model always contains the aggregate cut from `prox` and the
    /// oracle cut at `z_{k+1}`, which is what the convergence theory needs.
    pub fn update_after_null(&mut self, prox: &ProxResult, oracle_cut: Cut) {
        match self.strategy {
            ModelStrategy::TwoCut => {
                self.cuts = vec![prox.aggregate_cut.clone(), oracle_cut];
            }
            ModelStrategy::FullMemory { capacity } => {
                self.cuts.retain(|c| c.origin != CutOrigin::Aggregate);
                self.cuts.push(prox.aggregate_cut.clone());
                self.push_oracle_cut(oracle_cut);
                self.evict(capacity);
            }
        }
    }

    /// Refresh after a descent step; `oracle_cut` is taken at the new center.
    pub fn update_after_descent(&mut self, prox: &ProxResult, oracle_cut: Cut) {
        match self.strategy {
            // Keeps the freshest aggregate alongside the new cut.
            ModelStrategy::TwoCut => {
                self.cuts = vec![prox.aggregate_cut.clone(), oracle_cut];
            }
            ModelStrategy::FullMemory { capacity } => {
                self.push_oracle_cut(oracle_cut);
                self.evict(capacity);
            }
        }
    }

    /// Replace the whole model by one cut.
    pub fn reset(&mut self, cut: Cut) {
        self.cuts = vec![cut];
    }

    fn push_oracle_cut(&mut self, cut: Cut) {
        if let Some(pos) = self.cuts.iter().position(|c| c.same_as(&cut)) {
            // Move the duplicate to the back so it counts as newest.
            let dup = self.cuts.remove(pos);
            self.cuts.push(dup);
        } else {
            self.cuts.push(cut);
        }
    }

    /// Drop the oldest oracle cuts until within capacity. The newest cut and
    /// aggregate cuts are never evicted.
    fn evict(&mut self, capacity: Option<usize>) {
        let Some(cap) = capacity else { return };
        while self.cuts.len() > cap {
            let last = self.cuts.len() - 1;
            match self.cuts[..last].iter().position(|c| c.origin == CutOrigin::Oracle) {
                Some(i) => {
                    self.cuts.remove(i);
                }
                None => break,
            }
        }
    }

    /// JSON dump of the cut set for trace inspection.
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{prox_model, ProxResult};
    use rand::Rng;

    fn dv(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn square_cut(x: f64) -> Cut {
        Cut::from_oracle(&dv(&[x]), x * x, dv(&[2.0 * x]))
    }

    #[test]
    fn constant_cut_value() {
        let c = Cut { slope: dv(&[0.0, 0.0]), intercept: 5.0, origin: CutOrigin::Oracle };
        let m = CutModel::new(ModelStrategy::TwoCut, c).unwrap();
        assert_eq!(m.value(&dv(&[3.0, -1.0])), 5.0);
    }

    #[test]
    fn abs_from_two_cuts() {
        let mut m =
            CutModel::new(ModelStrategy::FullMemory { capacity: None }, Cut::from_oracle(&dv(&[1.0]), 1.0, dv(&[1.0])))
                .unwrap();
        m.push_oracle_cut(Cut::from_oracle(&dv(&[-1.0]), 1.0, dv(&[-1.0])));
        assert_eq!(m.value(&dv(&[3.0])), 3.0);
        assert_eq!(m.value(&dv(&[-3.0])), 3.0);
    }

    #[test]
    fn tangents_of_square_at_origin() {
        let mut m = CutModel::new(ModelStrategy::FullMemory { capacity: None }, square_cut(-2.0)).unwrap();
        for x in [-1.0, 1.0, 2.0] {
            m.push_oracle_cut(square_cut(x));
        }
        // Tangents at ±1 give -1 at the origin; tangents at ±2 give -4.
        assert_eq!(m.value(&dv(&[0.0])), -1.0);
    }

    #[test]
    fn oracle_cut_touches_at_anchor() {
        let z = dv(&[0.3, -1.2]);
        let c = Cut::from_oracle(&z, 2.5, dv(&[1.0, 4.0]));
        assert!((c.value(&z) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn duplicate_cuts_are_not_added_twice() {
        let mut m = CutModel::new(ModelStrategy::FullMemory { capacity: None }, square_cut(1.0)).unwrap();
        m.push_oracle_cut(square_cut(1.0));
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn capacity_below_two_is_rejected() {
        let err = CutModel::new(ModelStrategy::FullMemory { capacity: Some(1) }, square_cut(1.0));
        assert!(err.is_err());
    }

    fn null_sequence(strategy: ModelStrategy, nulls: usize) -> CutModel {
        // f = |x| from x = 1 with a small rho so every step is a null step
        // candidate; we only exercise the model update here.
        let f = |z: f64| {
            (
                z.abs(),
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    -1.0
                } else {
                    0.0
                },
            )
        };
        let x = dv(&[1.0]);
        let (fx, gx) = f(1.0);
        let mut m = CutModel::new(strategy, Cut::from_oracle(&x, fx, dv(&[gx]))).unwrap();
        for _ in 0..nulls {
            let prox: ProxResult = prox_model(&m, &x, 0.4, 1e-12).unwrap();
            let zv = prox.z_next[0];
            let (fz, gz) = f(zv);
            m.update_after_null(&prox, Cut::from_oracle(&prox.z_next, fz, dv(&[gz])));
        }
        m
    }

    #[test]
    fn two_cut_has_exactly_two_cuts() {
        let m = null_sequence(ModelStrategy::TwoCut, 5);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn full_memory_grows_by_one_per_null() {
        let m = null_sequence(ModelStrategy::FullMemory { capacity: None }, 1);
        assert_eq!(m.len(), 3);
        let mut rng = crate::rng::stream(0, "model-test");
        for _ in 0..100 {
            let z = rng.random_range(-5.0..5.0);
            assert!(m.value(&dv(&[z])) <= z.abs() + 1e-12);
        }
    }

    #[test]
    fn capacity_keeps_aggregate_and_newest() {
        let mut m = CutModel::new(ModelStrategy::FullMemory { capacity: Some(3) }, square_cut(3.0)).unwrap();
        let x = dv(&[3.0]);
        for _ in 0..6 {
            let prox = prox_model(&m, &x, 1.0, 1e-12).unwrap();
            let z = prox.z_next[0];
            m.update_after_null(&prox, square_cut(z));
        }
        assert_eq!(m.len(), 3);
        assert!(m.cuts().iter().any(|c| c.origin == CutOrigin::Aggregate));
        assert_eq!(m.cuts().last().unwrap().origin, CutOrigin::Oracle);
    }

    #[test]
    fn descent_updates_keep_minorant_of_square() {
        let mut rng = crate::rng::stream(5, "descent-updates");
        for strategy in [ModelStrategy::TwoCut, ModelStrategy::FullMemory { capacity: Some(4) }] {
            let mut x = dv(&[2.0]);
            let mut m = CutModel::new(strategy, square_cut(2.0)).unwrap();
            for _ in 0..10 {
                let rho = rng.random_range(0.5..4.0);
                let prox = prox_model(&m, &x, rho, 1e-12).unwrap();
                let z = prox.z_next[0];
                m.update_after_descent(&prox, square_cut(z));
                x = prox.z_next.clone();
                for _ in 0..50 {
                    let t = rng.random_range(-5.0..5.0);
                    assert!(m.value(&dv(&[t])) <= t * t + 1e-9);
                }
                if strategy == ModelStrategy::TwoCut {
                    assert_eq!(m.len(), 2);
                }
            }
        }
    }

    #[test]
    fn json_dump_lists_cuts() {
        let m = CutModel::new(ModelStrategy::TwoCut, square_cut(1.0)).unwrap();
        let s = m.to_json().unwrap();
        assert!(s.contains("\"intercept\""));
        assert!(s.contains("\"oracle\""));
    }
}
