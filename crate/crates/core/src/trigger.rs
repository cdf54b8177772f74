//! Remesh trigger: fires when the quality at some quadrature point reaches
//! the bound `mu(U)` of the admissible Jacobian `U = S W^{-1}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmopError};
use crate::linalg::Mat;
use crate::mesh::{jacobian_from_grads, Mesh, QuadratureRule, Tabulation};
use crate::metrics::{eval_metric, MetricId, MetricValue};
use crate::targets::TargetField;

/// Floor on the bound when forming ratios.
pub const RATIO_EPS: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSpec {
    pub s: Mat,
    pub metric: MetricId,
}

impl AdmissibleSpec {
    pub fn new(s: Mat, metric: MetricId) -> Result<Self> {
        metric.check_dim(s.dim())?;
        if !(s.det() > 0.0) {
            return Err(TmopError::invalid(format!("admissible Jacobian needs det S > 0, got {}", s.det())));
        }
        Ok(AdmissibleSpec { s, metric })
    }

    /// `S = diag(diagonal)`.
    pub fn diagonal(diagonal: &[f64], metric: MetricId) -> Result<Self> {
        if !(2..=3).contains(&diagonal.len()) {
            return Err(TmopError::invalid(format!(
                "admissible diagonal needs 2 or 3 entries, got {}",
                diagonal.len()
            )));
        }
        Self::new(Mat::from_diag(diagonal), metric)
    }
}

/// `mu(S W^{-1})`.
pub fn admissible_bound(spec: &AdmissibleSpec, w: &Mat) -> Result<MetricValue> {
    if w.dim() != spec.s.dim() {
        return Err(TmopError::invalid("target and admissible Jacobian differ in dimension"));
    }
    let w_inv = w
        .inverse()
        .filter(|_| w.det() > 0.0)
        .ok_or_else(|| TmopError::invalid("target Jacobian needs det W > 0"))?;
    Ok(eval_metric(spec.metric, &(spec.s * w_inv)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerResult {
    pub fires: bool,
    /// `max mu(T) / max(mu(U), eps)`; infinite when some `T` is infeasible.
    #[serde(with = "extended_f64")]
    pub worst_ratio: f64,
    pub worst_element: usize,
    pub worst_point: usize,
    /// Number of points whose bound `mu(U)` is itself infeasible; these fire.
    pub infeasible_bounds: usize,
    /// Number of points with `det T <= 0`.
    pub infeasible_points: usize,
}

/// Serializes non-finite values as the strings `inf`, `-inf` and `nan`.
mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

struct PointScan {
    ratio: f64,
    fires: bool,
    bound_infeasible: bool,
    t_infeasible: bool,
}

fn scan_point(spec: &AdmissibleSpec, a: &Mat, w: &Mat, w_inv: &Mat) -> PointScan {
    let bound = admissible_bound(spec, w).unwrap_or(MetricValue::Infeasible);
    match eval_metric(spec.metric, &(*a * *w_inv)) {
        MetricValue::Infeasible => PointScan {
            ratio: f64::INFINITY,
            fires: true,
            bound_infeasible: !bound.is_feasible(),
            t_infeasible: true,
        },
        MetricValue::Feasible(mu_t) => match bound {
            MetricValue::Feasible(mu_u) => PointScan {
                ratio: mu_t / mu_u.max(RATIO_EPS),
                fires: mu_t >= mu_u,
                bound_infeasible: false,
                t_infeasible: false,
            },
            MetricValue::Infeasible => PointScan {
                ratio: f64::INFINITY,
                fires: true,
                bound_infeasible: true,
                t_infeasible: false,
            },
        },
    }
}

/// Evaluates the trigger at every quadrature point.
///
/// Ties in the worst ratio go to the lowest (element, point) index.
pub fn check_trigger(mesh: &Mesh, targets: &TargetField, spec: &AdmissibleSpec, quad: &QuadratureRule) -> Result<TriggerResult> {
    spec.metric.check_dim(mesh.dim())?;
    if spec.s.dim() != mesh.dim() {
        return Err(TmopError::invalid("admissible Jacobian dimension differs from the mesh"));
    }
    targets.check_shape(mesh, quad)?;
    let tab = Tabulation::new(mesh.basis(), quad);
    let d = mesh.dim();
    let per_element: Vec<Vec<PointScan>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            (0..quad.num_points())
                .map(|q| {
                    let a = jacobian_from_grads(d, mesh.coords(), mesh.element(e), tab.grads(q));
                    scan_point(spec, &a, targets.w(e, q), targets.w_inv(e, q))
                })
                .collect()
        })
        .collect();
    let mut result = TriggerResult {
        fires: false,
        worst_ratio: f64::NEG_INFINITY,
        worst_element: 0,
        worst_point: 0,
        infeasible_bounds: 0,
        infeasible_points: 0,
    };
    for (e, points) in per_element.iter().enumerate() {
        for (q, p) in points.iter().enumerate() {
            result.fires |= p.fires;
            result.infeasible_bounds += p.bound_infeasible as usize;
            result.infeasible_points += p.t_infeasible as usize;
            if p.ratio > result.worst_ratio {
                result.worst_ratio = p.ratio;
                result.worst_element = e;
                result.worst_point = q;
            }
        }
    }
    Ok(result)
}

/// Pointwise statistics of `mu(T)` over all quadrature points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStatistics {
    pub metric: MetricId,
    pub min: f64,
    /// Quadrature-weighted mean over the target measure.
    pub mean: f64,
    pub max: f64,
    pub infeasible_points: usize,
}

pub fn metric_statistics(mesh: &Mesh, targets: &TargetField, metric: MetricId, quad: &QuadratureRule) -> Result<MetricStatistics> {
    metric.check_dim(mesh.dim())?;
    targets.check_shape(mesh, quad)?;
    let tab = Tabulation::new(mesh.basis(), quad);
    let d = mesh.dim();
    let per_element: Vec<(f64, f64, f64, f64, usize)> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let (mut lo, mut hi, mut sum, mut measure, mut bad) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0, 0);
            for q in 0..quad.num_points() {
                let a = jacobian_from_grads(d, mesh.coords(), mesh.element(e), tab.grads(q));
                let wq = quad.weights[q] * targets.det_w(e, q);
                match eval_metric(metric, &(a * *targets.w_inv(e, q))) {
                    MetricValue::Feasible(mu) => {
                        lo = lo.min(mu);
                        hi = hi.max(mu);
                        sum += wq * mu;
                        measure += wq;
                    }
                    MetricValue::Infeasible => bad += 1,
                }
            }
            (lo, hi, sum, measure, bad)
        })
        .collect();
    let mut stats = MetricStatistics {
        metric,
        min: f64::INFINITY,
        mean: 0.0,
        max: f64::NEG_INFINITY,
        infeasible_points: 0,
    };
    let mut measure = 0.0;
    for (lo, hi, sum, m, bad) in per_element {
        stats.min = stats.min.min(lo);
        stats.max = stats.max.max(hi);
        stats.mean += sum;
        measure += m;
        stats.infeasible_points += bad;
    }
    if stats.infeasible_points > 0 {
        stats.max = f64::INFINITY;
    }
    stats.mean = if measure > 0.0 { stats.mean / measure } else { f64::NAN };
    Ok(stats)
}
