//! JSON run reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_text, write_text, RunConfig};
use crate::error::{Result, TmopError};
use crate::metrics::MetricId;
use crate::solver::SolverReport;
use crate::trigger::TriggerResult;

/// Normalized integral of one metric term before and after optimization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricPart {
    pub metric: MetricId,
    pub weight: f64,
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_part: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Config entries as written.
    pub config: Vec<(String, String)>,
    pub metric_parts: Vec<MetricPart>,
    pub solver: SolverReport,
    /// Trigger check on the optimized mesh, when the config defines one.
    pub trigger: Option<TriggerResult>,
    pub wall_time_seconds: f64,
}

impl RunReport {
    pub fn new(config: &RunConfig, solver: SolverReport, trigger: Option<TriggerResult>, wall_time_seconds: f64) -> Self {
        let metric_parts = config
            .metrics
            .iter()
            .zip(&config.weights)
            .enumerate()
            .map(|(i, (&metric, &weight))| MetricPart {
                metric,
                weight,
                initial: solver.initial.metric_parts[i],
                final_part: solver.final_value.metric_parts[i],
            })
            .collect();
        RunReport {
            config: config.entries.clone(),
            metric_parts,
            solver,
            trigger,
            wall_time_seconds,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| TmopError::invalid(format!("cannot serialize report: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| TmopError::invalid(format!("malformed report: {e}")))
    }
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    let mut text = report.to_json()?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    RunReport::from_json(&read_text(path)?)
}
