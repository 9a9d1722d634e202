//! Structured run reports and their JSON/CSV serializations.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// One measured quantity with its gate. A trial passes iff
/// `residual <= tolerance`; lower-bound checks ("shortfall" trials) encode
/// threshold − measured as the residual against a zero tolerance, so a
/// negative residual reads as margin.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Trial {
    pub fn gate(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self { index: 0, name: name.into(), residual, tolerance, passed: residual <= tolerance }
    }

    /// Lower-bound check: `measured` must exceed `threshold`.
    pub fn shortfall(name: impl Into<String>, threshold: f64, measured: f64) -> Self {
        Self::gate(name, threshold - measured, 0.0)
    }
}

/// Full experiment report. Field order is the serialization order, which is
/// what makes repeated runs byte-comparable (modulo `wall_time_ms`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub experiment: ExperimentConfig,
    pub library_version: String,
    pub seed: u64,
    pub wall_time_ms: u64,
    pub trials: Vec<Trial>,
    pub passed: bool,
}

impl Report {
    pub fn new(experiment: ExperimentConfig, mut trials: Vec<Trial>, wall_time_ms: u64) -> Self {
        for (i, t) in trials.iter_mut().enumerate() {
            t.index = i;
        }
        let passed = trials.iter().all(|t| t.passed);
        Self {
            seed: experiment.seed,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment,
            wall_time_ms,
            trials,
            passed,
        }
    }

    /// Pretty JSON with stable key order (struct order), newline-terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per trial: trial, residual, tolerance, verdict.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,residual,tolerance,verdict\n");
        for t in &self.trials {
            out.push_str(&format!(
                "{},{:e},{:e},{}\n",
                t.index,
                t.residual,
                t.tolerance,
                if t.passed { "pass" } else { "fail" }
            ));
        }
        out
    }

    pub fn emit(&self, writer: &mut impl Write, format: crate::config::ReportFormat) -> std::io::Result<()> {
        let text = match format {
            crate::config::ReportFormat::Json => self.to_json(),
            crate::config::ReportFormat::Csv => self.to_csv(),
        };
        writer.write_all(text.as_bytes())
    }
}
