//! Per-iteration run records and their CSV / JSON export.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// The starting point, before any step.
    Init,
    Descent,
    Null,
    /// One iteration of a baseline method.
    Step,
}

impl StepKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepKind::Init => "init",
            StepKind::Descent => "descent",
            StepKind::Null => "null",
            StepKind::Step => "step",
        }
    }
}

/// One row of a run trace. `f` is the objective at the current center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub step_type: StepKind,
    pub f: f64,
    pub gap: Option<f64>,
    pub rho: f64,
    pub oracle_calls: usize,
    pub agg_norm: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub descent_count: usize,
    pub null_count: usize,
    pub best_f: f64,
    pub best_gap: Option<f64>,
    pub oracle_calls: usize,
    pub wall_time_secs: f64,
    pub stop_reason: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub summary: RunSummary,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

impl RunTrace {
    pub fn push(&mut self, record: TraceRecord) {
        self.records.push(record);
    }

    /// Recompute the summary counters from the records.
    pub fn finalize(&mut self, stop_reason: impl Into<String>, wall_time_secs: f64) {
        let s = &mut self.summary;
        s.descent_count = self.records.iter().filter(|r| r.step_type == StepKind::Descent).count();
        s.null_count = self.records.iter().filter(|r| r.step_type == StepKind::Null).count();
        s.iterations = self.records.iter().filter(|r| r.step_type != StepKind::Init).count();
        s.best_f = self.records.iter().map(|r| r.f).fold(f64::INFINITY, f64::min);
        s.best_gap = self.records.iter().filter_map(|r| r.gap).reduce(f64::min);
        s.oracle_calls = self.records.last().map(|r| r.oracle_calls).unwrap_or(0);
        s.wall_time_secs = wall_time_secs;
        s.stop_reason = stop_reason.into();
    }

    /// Running minimum of the gap column (the "best gap so far" series).
    pub fn best_gap_series(&self) -> Vec<Option<f64>> {
        let mut best: Option<f64> = None;
        self.records
            .iter()
            .map(|r| {
                if let Some(g) = r.gap {
                    best = Some(best.map_or(g, |b: f64| b.min(g)));
                }
                best
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "step_type", "f", "gap", "rho", "oracle_calls", "agg_norm"])?;
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.step_type.as_str().to_string(),
                fmt_f64(r.f),
                fmt_opt(r.gap),
                fmt_f64(r.rho),
                r.oracle_calls.to_string(),
                fmt_opt(r.agg_norm),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}
