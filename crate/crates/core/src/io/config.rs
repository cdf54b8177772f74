//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown or repeated
//! keys are errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{read_field, read_text, LineReader};
use crate::error::{Result, TmopError};
use crate::linalg::Mat;
use crate::mesh::Mesh;
use crate::metrics::MetricId;
use crate::objective::{Limiting, MetricTerm, ObjectiveConfig, SpatialScalar, XiKind};
use crate::scenarios::Scenario;
use crate::solver::{SolverMode, SolverParams, TargetUpdate};
use crate::targets::TargetKind;
use crate::trigger::AdmissibleSpec;

pub const CONFIG_KEYS: [&str; 13] = [
    "metric",
    "weights",
    "xi",
    "delta",
    "target",
    "alpha",
    "quad_points",
    "solver.max_iters",
    "solver.grad_tol",
    "solver.mode",
    "solver.targets",
    "trigger.S",
    "trigger.metric",
];

#[derive(Clone, Debug, PartialEq)]
pub enum DeltaSpec {
    Constant(f64),
    /// Nodal field on the input mesh; relative paths resolve against the
    /// config file's directory.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub metrics: Vec<MetricId>,
    pub weights: Vec<f64>,
    pub xi: XiKind,
    pub delta: Option<DeltaSpec>,
    pub target: TargetKind,
    pub alpha: f64,
    pub quad_points: Option<usize>,
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub mode: Option<SolverMode>,
    pub target_update: Option<TargetUpdate>,
    /// Diagonal of the admissible Jacobian.
    pub trigger_s: Option<Vec<f64>>,
    pub trigger_metric: Option<MetricId>,
    /// `(key, value)` pairs as written, in file order.
    pub entries: Vec<(String, String)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            metrics: Vec::new(),
            weights: Vec::new(),
            xi: XiKind::None,
            delta: None,
            target: TargetKind::Ideal,
            alpha: 10.0,
            quad_points: None,
            max_iters: None,
            grad_tol: None,
            mode: None,
            target_update: None,
            trigger_s: None,
            trigger_metric: None,
            entries: Vec::new(),
        }
    }
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| format!("invalid list entry '{}'", t.trim())))
        .collect()
}

fn positive(v: f64, key: &str) -> std::result::Result<f64, String> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("'{key}' must be positive and finite"))
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&read_text(path)?, path, base)
}

/// Parses a configuration; `@file` values resolve against `base_dir`.
pub fn parse_config(text: &str, path: &Path, base_dir: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut r = LineReader::new(text, path);
    let mut seen_weights = false;
    while let Ok((n, line)) = r.next("") {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(r.error(n, format!("expected 'key = value', found '{line}'")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !CONFIG_KEYS.contains(&key) {
            return Err(r.error(n, format!("unknown key '{key}'")));
        }
        if cfg.entries.iter().any(|(k, _)| k == key) {
            return Err(r.error(n, format!("key '{key}' given twice")));
        }
        cfg.entries.push((key.to_string(), value.to_string()));
        let parsed: std::result::Result<(), String> = (|| {
            let num = |v: &str| v.parse::<f64>().map_err(|_| format!("invalid number '{v}' for '{key}'"));
            let err = |e: TmopError| e.to_string();
            match key {
                "metric" => cfg.metrics = list(value).map_err(|e| format!("{e} (expected mu2, mu7 or mu9)"))?,
                "weights" => {
                    cfg.weights = list(value)?;
                    seen_weights = true;
                    if cfg.weights.iter().any(|w: &f64| !w.is_finite() || *w < 0.0) {
                        return Err("weights must be finite and non-negative".into());
                    }
                }
                "xi" => cfg.xi = value.parse().map_err(err)?,
                "delta" => {
                    cfg.delta = Some(match value.strip_prefix('@') {
                        Some(file) => DeltaSpec::File(base_dir.join(file.trim())),
                        None => DeltaSpec::Constant(positive(num(value)?, key)?),
                    })
                }
                "target" => cfg.target = value.parse().map_err(err)?,
                "alpha" => cfg.alpha = positive(num(value)?, key)?,
                "quad_points" => {
                    let q: usize = value.parse().map_err(|_| format!("invalid count '{value}'"))?;
                    if q == 0 {
                        return Err("quad_points must be at least 1".into());
                    }
                    cfg.quad_points = Some(q);
                }
                "solver.max_iters" => cfg.max_iters = Some(value.parse().map_err(|_| format!("invalid count '{value}'"))?),
                "solver.grad_tol" => cfg.grad_tol = Some(positive(num(value)?, key)?),
                "solver.mode" => cfg.mode = Some(value.parse().map_err(err)?),
                "solver.targets" => cfg.target_update = Some(value.parse().map_err(err)?),
                "trigger.S" => {
                    let s: Vec<f64> = list(value)?;
                    for &v in &s {
                        positive(v, key)?;
                    }
                    cfg.trigger_s = Some(s);
                }
                "trigger.metric" => cfg.trigger_metric = Some(value.parse().map_err(err)?),
                _ => unreachable!("key list and match arms differ"),
            }
            Ok(())
        })();
        parsed.map_err(|m| r.error(n, m))?;
    }
    if cfg.metrics.is_empty() {
        return Err(r.error(0, "missing required key 'metric'"));
    }
    if !seen_weights {
        cfg.weights = vec![1.0; cfg.metrics.len()];
    } else if cfg.weights.len() != cfg.metrics.len() {
        return Err(r.error(0, format!("{} weights given for {} metrics", cfg.weights.len(), cfg.metrics.len())));
    }
    if cfg.xi != XiKind::None && cfg.delta.is_none() {
        return Err(r.error(0, format!("xi = {} requires 'delta'", cfg.xi)));
    }
    if cfg.trigger_s.is_some() != cfg.trigger_metric.is_some() {
        return Err(r.error(0, "'trigger.S' and 'trigger.metric' must be given together"));
    }
    Ok(cfg)
}

impl RunConfig {
    /// Objective settings on `mesh0`; reads the `delta` field file if any.
    pub fn objective_config(&self, mesh0: &Mesh) -> Result<ObjectiveConfig> {
        for m in &self.metrics {
            m.check_dim(mesh0.dim())?;
        }
        let terms = self
            .metrics
            .iter()
            .zip(&self.weights)
            .map(|(&metric, &w)| MetricTerm {
                metric,
                weight: SpatialScalar::Constant(w),
            })
            .collect();
        let limiting = match (&self.delta, self.xi) {
            (_, XiKind::None) | (None, _) => Limiting::none(),
            (Some(DeltaSpec::Constant(d)), kind) => Limiting {
                kind,
                delta: SpatialScalar::Constant(*d),
            },
            (Some(DeltaSpec::File(p)), kind) => {
                let field = read_field(p, mesh0)?;
                if let Some(v) = field.values().iter().find(|v| !(**v > 0.0)) {
                    return Err(TmopError::invalid(format!("{}: delta value {v} is not positive", p.display())));
                }
                Limiting {
                    kind,
                    delta: SpatialScalar::Nodal(field),
                }
            }
        };
        Ok(ObjectiveConfig {
            terms,
            limiting,
            quad_points: self.quad_points,
            fixed_nodes: None,
        })
    }

    pub fn solver_params(&self) -> SolverParams {
        let mut p = SolverParams::default();
        if let Some(v) = self.max_iters {
            p.max_iterations = v;
        }
        if let Some(v) = self.grad_tol {
            p.gradient_tolerance = v;
        }
        if let Some(v) = self.mode {
            p.mode = v;
        }
        if let Some(v) = self.target_update {
            p.target_update = v;
        }
        p
    }

    pub fn admissible_spec(&self) -> Result<Option<AdmissibleSpec>> {
        match (&self.trigger_s, self.trigger_metric) {
            (Some(s), Some(metric)) => Ok(Some(AdmissibleSpec::new(Mat::from_diag(s), metric)?)),
            _ => Ok(None),
        }
    }

    /// Settings of a built-in scenario. `delta_file` names the nodal field
    /// used when the limiting distance varies in space.
    pub fn from_scenario(s: &Scenario, delta_file: Option<&str>) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            target: s.target,
            alpha: s.alpha,
            quad_points: s.config.quad_points,
            ..RunConfig::default()
        };
        for t in &s.config.terms {
            let SpatialScalar::Constant(w) = t.weight else {
                return Err(TmopError::invalid("only constant metric weights can be written to a config"));
            };
            cfg.metrics.push(t.metric);
            cfg.weights.push(w);
        }
        cfg.xi = s.config.limiting.kind;
        if cfg.xi != XiKind::None {
            cfg.delta = Some(match (&s.config.limiting.delta, delta_file) {
                (SpatialScalar::Constant(d), _) => DeltaSpec::Constant(*d),
                (_, Some(f)) => DeltaSpec::File(PathBuf::from(f)),
                (_, None) => return Err(TmopError::invalid("a space-dependent delta needs a field file")),
            });
        }
        let defaults = SolverParams::default();
        if s.solver.target_update != defaults.target_update {
            cfg.target_update = Some(s.solver.target_update);
        }
        if s.solver.mode != defaults.mode {
            cfg.mode = Some(s.solver.mode);
        }
        if let Some(spec) = &s.trigger {
            cfg.trigger_s = Some((0..spec.s.dim()).map(|i| spec.s.get(i, i)).collect());
            cfg.trigger_metric = Some(spec.metric);
        }
        Ok(cfg)
    }

    /// Config file text; parsing it yields the same settings.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let metrics: Vec<&str> = self.metrics.iter().map(|m| m.name()).collect();
        let _ = writeln!(s, "metric = {}", metrics.join(", "));
        let _ = writeln!(s, "weights = {}", join(&self.weights));
        let _ = writeln!(s, "xi = {}", self.xi);
        match &self.delta {
            Some(DeltaSpec::Constant(d)) => {
                let _ = writeln!(s, "delta = {d:?}");
            }
            Some(DeltaSpec::File(p)) => {
                let _ = writeln!(s, "delta = @{}", p.display());
            }
            None => {}
        }
        let _ = writeln!(s, "target = {}", self.target);
        let _ = writeln!(s, "alpha = {:?}", self.alpha);
        if let Some(q) = self.quad_points {
            let _ = writeln!(s, "quad_points = {q}");
        }
        if let Some(v) = self.max_iters {
            let _ = writeln!(s, "solver.max_iters = {v}");
        }
        if let Some(v) = self.grad_tol {
            let _ = writeln!(s, "solver.grad_tol = {v:?}");
        }
        if let Some(v) = self.mode {
            let _ = writeln!(s, "solver.mode = {v}");
        }
        if let Some(v) = self.target_update {
            let _ = writeln!(s, "solver.targets = {v}");
        }
        if let (Some(d), Some(m)) = (&self.trigger_s, self.trigger_metric) {
            let _ = writeln!(s, "trigger.S = {}", join(d));
            let _ = writeln!(s, "trigger.metric = {m}");
        }
        s
    }
}
