//! The report.json schema.

use serde::{Deserialize, Serialize};

use crate::config::Tolerances;

pub const REPORT_SCHEMA: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub h: f64,
    pub n: usize,
}

/// One scalar check. Only `asserted` checks decide the exit code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
    pub asserted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    /// Passes when `value ≤ tol`.
    pub fn at_most(check: &str, value: f64, tol: f64, asserted: bool) -> Self {
        Check { check: check.into(), value, tol, pass: value <= tol, asserted, grid: None, note: None }
    }

    /// Passes when `value ≥ tol`.
    pub fn at_least(check: &str, value: f64, tol: f64, asserted: bool) -> Self {
        Check { check: check.into(), value, tol, pass: value >= tol, asserted, grid: None, note: None }
    }

    pub fn on_grid(mut self, grid: Option<GridInfo>) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Sampled relation between Hamiltonians or dissipation potentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub relation: String,
    pub samples: usize,
    pub seed: u64,
    pub max_defect: f64,
    pub tol: f64,
    pub pass: bool,
    pub asserted: bool,
}

/// Defect against grid spacing with its least-squares log-log slope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub check: String,
    pub h: Vec<f64>,
    pub defect: Vec<f64>,
    pub fitted_order: f64,
    pub min_order: f64,
    pub pass: bool,
    pub asserted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSection {
    pub t_end: f64,
    pub dt: f64,
    pub scheme: String,
    pub steps: usize,
    pub total_clipped: f64,
    pub aborted: Option<String>,
    pub t: Vec<f64>,
    pub mass: Vec<f64>,
    pub min_value: Vec<f64>,
    /// One series per requested monitor that applies to the model.
    pub monitors: Vec<Series>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Average {
    pub name: String,
    pub mean: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reversal {
    pub lag: f64,
    pub distance: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub pairs: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSection {
    pub t_end: f64,
    pub seed: u64,
    pub h_flow: f64,
    pub skeleton_dt: f64,
    pub bounces: usize,
    pub refreshes: usize,
    pub proposals: usize,
    pub bound_restarts: usize,
    pub averages: Vec<Average>,
    pub tv_to_mu: Option<f64>,
    /// Pathwise reversibility up to the velocity flip; a diagnostic, never asserted.
    pub reversal: Option<Reversal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub kind: String,
    pub name: String,
    pub states: usize,
    pub h: Option<f64>,
    pub params: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub library_version: String,
    pub task: String,
    pub seed: u64,
    pub model: Option<ModelInfo>,
    pub tolerances: Tolerances,
    pub checks: Vec<Check>,
    pub relations: Vec<Relation>,
    pub studies: Vec<Study>,
    pub evolution: Option<EvolutionSection>,
    pub sampler: Option<SamplerSection>,
    pub warnings: Vec<String>,
    /// Every asserted check, relation and study passed.
    pub pass: bool,
    /// Unix seconds; the only field that differs between identical runs.
    pub generated_at: u64,
}

impl Report {
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self.checks.iter().filter(|c| c.asserted && !c.pass).map(|c| c.check.clone()).collect();
        out.extend(self.relations.iter().filter(|r| r.asserted && !r.pass).map(|r| r.relation.clone()));
        out.extend(self.studies.iter().filter(|s| s.asserted && !s.pass).map(|s| format!("{} order", s.check)));
        out
    }

    pub fn settle(&mut self) {
        self.pass = self.failures().is_empty();
    }
}
