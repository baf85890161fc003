//! Machine-readable reports for the gradcheck and optimize runs.

use serde::{Deserialize, Serialize};

use crate::config::FormulaMode;

pub const SCHEMA_VERSION: u32 = 1;

/// One gradient-check trial. Trials that error keep `rel_error` and
/// `gauge_residual` null and carry the reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub loss_name: String,
    pub rows: usize,
    pub cols: usize,
    /// Absent when the input came from a matrix file.
    pub seed: Option<u64>,
    pub formula_mode: FormulaMode,
    pub h: f64,
    pub rel_error: Option<f64>,
    pub gauge_residual: Option<f64>,
    pub passed: bool,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub failures: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub schema: u32,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
}

impl GradCheckReport {
    pub fn failures(&self) -> usize {
        self.summary.failures
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Copy with timings zeroed, for bitwise comparisons between runs.
    pub fn without_timings(&self) -> Self {
        let mut copy = self.clone();
        for trial in &mut copy.trials {
            trial.wall_time_ms = 0.0;
        }
        copy
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub schema: u32,
    pub loss_name: String,
    pub rows: usize,
    pub cols: usize,
    pub seed: Option<u64>,
    pub eta: f64,
    pub steps: usize,
    /// Loss value before each step, then the final value; steps+1 entries.
    pub losses: Vec<f64>,
    pub monotone: bool,
    pub diverged: bool,
}

impl OptimizeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}
