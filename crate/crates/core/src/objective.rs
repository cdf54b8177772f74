//! Normalized multi-metric objective with a displacement-limiting term.
//!
//! ```text
//! F(x) = 1/n sum_s [ sum_E sum_q w_q det W  w_s mu_s(T) ] / D_s
//!      + c sum_E sum_q w_q det W  xi(x_q - x0_q, delta(x0_q))
//! ```
//!
//! `D_s` is the same metric integral evaluated on the Lagrangian mesh, so
//! every metric part equals `1/n` at `x0`. Space-dependent weights and
//! limiting distances are fixed per quadrature point at baseline time.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmopError};
use crate::field::DiscreteField;
use crate::linalg::Mat;
use crate::mesh::{gauss_legendre_rule, jacobian_from_grads, Mesh, QuadratureRule, Tabulation};
use crate::metrics::{eval_metric, metric_value_and_grad, MetricId, MetricValue};
use crate::targets::{TargetBuilder, TargetField};

/// Shape of the limiting function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum XiKind {
    None,
    /// `|d|^2 / delta^2`
    Quadratic,
    /// `exp(10 (|d|^2 / delta^2 - 1))`
    Exponential,
}

impl fmt::Display for XiKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XiKind::None => "none",
            XiKind::Quadratic => "quadratic",
            XiKind::Exponential => "exponential",
        })
    }
}

impl FromStr for XiKind {
    type Err = TmopError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(XiKind::None),
            "quadratic" => Ok(XiKind::Quadratic),
            "exponential" => Ok(XiKind::Exponential),
            other => Err(TmopError::invalid(format!(
                "unknown limiting function '{other}' (expected none, quadratic or exponential)"
            ))),
        }
    }
}

/// Limiting function value for displacement `disp` and allowed distance `delta`.
pub fn xi(kind: XiKind, disp: &[f64], delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(TmopError::invalid(format!("limiting distance must be positive, got {delta}")));
    }
    Ok(xi_and_grad(kind, disp, delta).0)
}

#[inline]
fn xi_and_grad(kind: XiKind, disp: &[f64], delta: f64) -> (f64, [f64; 3]) {
    let d2 = delta * delta;
    let inv_d2 = 1.0 / d2;
    // One division keeps xi = 1 exact at |d| = delta along an axis.
    let r2: f64 = disp.iter().map(|v| v * v).sum::<f64>() / d2;
    let mut g = [0.0; 3];
    match kind {
        XiKind::None => (0.0, g),
        XiKind::Quadratic => {
            for (gi, di) in g.iter_mut().zip(disp) {
                *gi = 2.0 * di * inv_d2;
            }
            (r2, g)
        }
        XiKind::Exponential => {
            let v = (10.0 * (r2 - 1.0)).exp();
            for (gi, di) in g.iter_mut().zip(disp) {
                *gi = 20.0 * v * di * inv_d2;
            }
            (v, g)
        }
    }
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar given on the Lagrangian mesh.
#[derive(Clone)]
pub enum SpatialScalar {
    Constant(f64),
    /// Interpolated from nodal values on the Lagrangian mesh.
    Nodal(DiscreteField),
    /// Evaluated at the Lagrangian position of each quadrature point.
    Function(ScalarFn),
}

impl fmt::Debug for SpatialScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpatialScalar::Constant(v) => write!(f, "Constant({v})"),
            SpatialScalar::Nodal(field) => write!(f, "Nodal({} values)", field.len()),
            SpatialScalar::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl SpatialScalar {
    pub fn function(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        SpatialScalar::Function(Arc::new(f))
    }

    fn at(&self, conn: &[usize], basis_values: &[f64], x0: &[f64]) -> f64 {
        match self {
            SpatialScalar::Constant(v) => *v,
            SpatialScalar::Nodal(field) => conn.iter().zip(basis_values).map(|(&n, w)| field.values()[n] * w).sum(),
            SpatialScalar::Function(f) => f(x0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MetricTerm {
    pub metric: MetricId,
    pub weight: SpatialScalar,
}

#[derive(Clone, Debug)]
pub struct Limiting {
    pub kind: XiKind,
    pub delta: SpatialScalar,
}

impl Limiting {
    pub fn none() -> Self {
        Limiting {
            kind: XiKind::None,
            delta: SpatialScalar::Constant(1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveConfig {
    pub terms: Vec<MetricTerm>,
    pub limiting: Limiting,
    /// Gauss-Legendre points per axis; `None` means `degree + 2`.
    pub quad_points: Option<usize>,
    /// Per-node fixed flags; `None` fixes exactly the boundary nodes.
    pub fixed_nodes: Option<Vec<bool>>,
}

impl ObjectiveConfig {
    /// A single unit-weight metric without limiting.
    pub fn single(metric: MetricId) -> Self {
        ObjectiveConfig {
            terms: vec![MetricTerm {
                metric,
                weight: SpatialScalar::Constant(1.0),
            }],
            limiting: Limiting::none(),
            quad_points: None,
            fixed_nodes: None,
        }
    }

    pub fn with_limiting(mut self, kind: XiKind, delta: SpatialScalar) -> Self {
        self.limiting = Limiting { kind, delta };
        self
    }

    pub fn quadrature(&self, mesh: &Mesh) -> QuadratureRule {
        gauss_legendre_rule(self.quad_points.unwrap_or(mesh.degree() + 2), mesh.dim())
    }
}

/// Data frozen on the Lagrangian mesh.
#[derive(Clone, Debug)]
pub struct Baseline {
    mesh0: Mesh,
    quad: QuadratureRule,
    tab: Tabulation,
    fixed: Vec<bool>,
    x0_qp: Vec<f64>,
    delta_qp: Vec<f64>,
    weight_qp: Vec<Vec<f64>>,
    /// Normalization denominators `D_s`.
    pub denominators: Vec<f64>,
    /// Terms whose initial integral vanished; their denominator is 1.
    pub identity_normalized: Vec<bool>,
    /// Limiting scale `c`: `1/V` for volumetric targets, else `1/N_E`.
    pub limit_scale: f64,
    pub volume: f64,
}

impl Baseline {
    pub fn mesh0(&self) -> &Mesh {
        &self.mesh0
    }

    pub fn x0(&self) -> &[f64] {
        self.mesh0.coords()
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn tabulation(&self) -> &Tabulation {
        &self.tab
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    pub fn delta_at(&self, e: usize, q: usize) -> f64 {
        self.delta_qp[e * self.tab.num_points + q]
    }

    /// Sets the gradient entries of fixed nodes to zero.
    pub fn zero_fixed(&self, v: &mut [f64]) {
        let d = self.mesh0.dim();
        for (n, &f) in self.fixed.iter().enumerate() {
            if f {
                v[n * d..(n + 1) * d].fill(0.0);
            }
        }
    }
}

/// Objective value split into its parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub total: f64,
    pub metric_parts: Vec<f64>,
    pub limiting_part: f64,
    pub feasible: bool,
}

impl ObjectiveValue {
    pub fn metric_sum(&self) -> f64 {
        self.metric_parts.iter().sum()
    }

    fn infeasible(n: usize) -> Self {
        ObjectiveValue {
            total: f64::INFINITY,
            metric_parts: vec![f64::INFINITY; n],
            limiting_part: f64::INFINITY,
            feasible: false,
        }
    }
}

fn validate_config(mesh0: &Mesh, config: &ObjectiveConfig) -> Result<()> {
    if config.terms.is_empty() {
        return Err(TmopError::invalid("at least one metric term is required"));
    }
    for t in &config.terms {
        t.metric.check_dim(mesh0.dim())?;
        match &t.weight {
            SpatialScalar::Constant(w) if !(*w >= 0.0) => {
                return Err(TmopError::invalid(format!("metric weight must be >= 0, got {w}")));
            }
            SpatialScalar::Nodal(f) => {
                f.check_host(mesh0)?;
                if f.values().iter().any(|w| !(*w >= 0.0)) {
                    return Err(TmopError::invalid("metric weight field has negative values"));
                }
            }
            _ => {}
        }
    }
    if config.limiting.kind != XiKind::None {
        match &config.limiting.delta {
            SpatialScalar::Constant(d) if !(*d > 0.0) => {
                return Err(TmopError::invalid(format!("limiting distance must be positive, got {d}")));
            }
            SpatialScalar::Nodal(f) => f.check_host(mesh0)?,
            _ => {}
        }
    }
    if let Some(fixed) = &config.fixed_nodes {
        if fixed.len() != mesh0.num_nodes() {
            return Err(TmopError::invalid("fixed-node mask length differs from node count"));
        }
    }
    if config.quad_points == Some(0) {
        return Err(TmopError::invalid("quadrature needs at least one point per axis"));
    }
    Ok(())
}

/// Raw metric integrals `sum_E sum_q w_q det W w_s mu_s(T)` per term, or
/// `None` when some point has `det A <= 0`.
fn raw_metric_integrals(
    x: &[f64],
    mesh: &Mesh,
    quad: &QuadratureRule,
    tab: &Tabulation,
    targets: &TargetField,
    terms: &[MetricTerm],
    weight_qp: &[Vec<f64>],
) -> Option<Vec<f64>> {
    let d = mesh.dim();
    let nq = quad.num_points();
    let per_element: Vec<Option<Vec<f64>>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let conn = mesh.element(e);
            let mut sums = vec![0.0; terms.len()];
            for q in 0..nq {
                let a = jacobian_from_grads(d, x, conn, tab.grads(q));
                if !(a.det() > 0.0) {
                    return None;
                }
                let t = a * *targets.w_inv(e, q);
                let wq = quad.weights[q] * targets.det_w(e, q);
                for (s, term) in terms.iter().enumerate() {
                    match eval_metric(term.metric, &t) {
                        MetricValue::Feasible(mu) => sums[s] += wq * weight_qp[s][e * nq + q] * mu,
                        MetricValue::Infeasible => return None,
                    }
                }
            }
            Some(sums)
        })
        .collect();
    let mut total = vec![0.0; terms.len()];
    for el in per_element {
        for (t, v) in total.iter_mut().zip(el?) {
            *t += v;
        }
    }
    Some(total)
}

/// Relative size below which an initial metric integral counts as zero.
const IDENTITY_NORMALIZATION_TOL: f64 = 1e-14;

/// Freezes the Lagrangian positions, per-point weights and limiting
/// distances, the normalization denominators and the limiting scale.
pub fn make_baseline(mesh0: &Mesh, targets: &TargetField, config: &ObjectiveConfig) -> Result<Baseline> {
    validate_config(mesh0, config)?;
    let quad = config.quadrature(mesh0);
    targets.check_shape(mesh0, &quad)?;
    let tab = Tabulation::new(mesh0.basis(), &quad);
    let d = mesh0.dim();
    let ne = mesh0.num_elements();
    let nq = quad.num_points();

    let mut x0_qp = Vec::with_capacity(ne * nq * d);
    let mut delta_qp = Vec::with_capacity(ne * nq);
    let mut weight_qp = vec![Vec::with_capacity(ne * nq); config.terms.len()];
    let delta_floor = 1e-12 * mesh0.diameter();
    for e in 0..ne {
        let conn = mesh0.element(e);
        for q in 0..nq {
            let vals = tab.values(q);
            let mut p = [0.0; 3];
            for (i, &n) in conn.iter().enumerate() {
                for a in 0..d {
                    p[a] += vals[i] * mesh0.coords()[n * d + a];
                }
            }
            x0_qp.extend_from_slice(&p[..d]);
            let delta = if config.limiting.kind == XiKind::None {
                1.0
            } else {
                config.limiting.delta.at(conn, vals, &p[..d])
            };
            // Degenerate distances are clamped; such points are effectively frozen.
            delta_qp.push(if delta > delta_floor { delta } else { delta_floor });
            for (s, term) in config.terms.iter().enumerate() {
                let w = term.weight.at(conn, vals, &p[..d]);
                if !(w >= 0.0) {
                    return Err(TmopError::invalid(format!("metric weight {w} at element {e} point {q} is negative")));
                }
                weight_qp[s].push(w);
            }
        }
    }

    let raw = raw_metric_integrals(mesh0.coords(), mesh0, &quad, &tab, targets, &config.terms, &weight_qp)
        .ok_or_else(|| TmopError::Infeasible(format!("initial mesh is inverted: {}", worst_point(mesh0, &tab))))?;
    let mut denominators = Vec::with_capacity(raw.len());
    let mut identity_normalized = Vec::with_capacity(raw.len());
    for (s, &r) in raw.iter().enumerate() {
        let measure: f64 = (0..ne * nq)
            .map(|i| quad.weights[i % nq] * targets.det_w(i / nq, i % nq) * weight_qp[s][i])
            .sum();
        if r > IDENTITY_NORMALIZATION_TOL * measure && r > 0.0 {
            denominators.push(r);
            identity_normalized.push(false);
        } else {
            denominators.push(1.0);
            identity_normalized.push(true);
        }
    }

    let volume = mesh0.volume(&quad);
    let limit_scale = if targets.volumetric { 1.0 / volume } else { 1.0 / ne as f64 };
    let fixed = config.fixed_nodes.clone().unwrap_or_else(|| mesh0.boundary_nodes().to_vec());

    Ok(Baseline {
        mesh0: mesh0.clone(),
        quad,
        tab,
        fixed,
        x0_qp,
        delta_qp,
        weight_qp,
        denominators,
        identity_normalized,
        limit_scale,
        volume,
    })
}

fn worst_point(mesh: &Mesh, tab: &Tabulation) -> String {
    let d = mesh.dim();
    let mut worst = (f64::INFINITY, 0, 0);
    for e in 0..mesh.num_elements() {
        for q in 0..tab.num_points {
            let det = jacobian_from_grads(d, mesh.coords(), mesh.element(e), tab.grads(q)).det();
            if det < worst.0 {
                worst = (det, e, q);
            }
        }
    }
    format!("det A = {:.6e} at element {} quadrature point {}", worst.0, worst.1, worst.2)
}

struct ElementResult {
    metric: Vec<f64>,
    limiting: f64,
    grad: Vec<f64>,
}

fn evaluate(
    x: &[f64],
    baseline: &Baseline,
    targets: &TargetField,
    config: &ObjectiveConfig,
    want_grad: bool,
) -> Option<(ObjectiveValue, Option<Vec<f64>>)> {
    let mesh = &baseline.mesh0;
    let d = mesh.dim();
    let nq = baseline.quad.num_points();
    let nb = mesh.nodes_per_element();
    let n_terms = config.terms.len();
    let inv_n = 1.0 / n_terms as f64;
    let coef: Vec<f64> = baseline.denominators.iter().map(|ds| inv_n / ds).collect();
    let c = baseline.limit_scale;
    let kind = config.limiting.kind;
    let tab = &baseline.tab;

    let per_element: Vec<Option<ElementResult>> = (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let conn = mesh.element(e);
            let mut xe = [0.0; 3 * 64];
            let xe = &mut xe[..nb * d];
            for (i, &n) in conn.iter().enumerate() {
                xe[i * d..(i + 1) * d].copy_from_slice(&x[n * d..(n + 1) * d]);
            }
            let mut res = ElementResult {
                metric: vec![0.0; n_terms],
                limiting: 0.0,
                grad: if want_grad { vec![0.0; nb * d] } else { Vec::new() },
            };
            for q in 0..nq {
                let grads = tab.grads(q);
                let mut a = Mat::zeros(d);
                for i in 0..nb {
                    for r in 0..d {
                        let xr = xe[i * d + r];
                        for cc in 0..d {
                            a.add_to(r, cc, xr * grads[i * d + cc]);
                        }
                    }
                }
                if !(a.det() > 0.0) {
                    return None;
                }
                let w_inv = targets.w_inv(e, q);
                let t = a * *w_inv;
                let wq = baseline.quad.weights[q] * targets.det_w(e, q);
                let idx = e * nq + q;
                let mut p = Mat::zeros(d);
                for (s, term) in config.terms.iter().enumerate() {
                    let ws = baseline.weight_qp[s][idx];
                    if want_grad {
                        let (mu, g) = metric_value_and_grad(term.metric, &t)?;
                        res.metric[s] += wq * ws * mu;
                        p = p + g.scale(wq * ws * coef[s]);
                    } else {
                        match eval_metric(term.metric, &t) {
                            MetricValue::Feasible(mu) => res.metric[s] += wq * ws * mu,
                            MetricValue::Infeasible => return None,
                        }
                    }
                }
                if want_grad {
                    // dF/dA = dF/dT W^{-t}; node i picks up (dF/dA) grad w_i.
                    let pa = p * w_inv.transpose();
                    for i in 0..nb {
                        let gi = &grads[i * d..(i + 1) * d];
                        for r in 0..d {
                            let mut acc = 0.0;
                            for cc in 0..d {
                                acc += pa.get(r, cc) * gi[cc];
                            }
                            res.grad[i * d + r] += acc;
                        }
                    }
                }
                if kind != XiKind::None {
                    let vals = tab.values(q);
                    let mut disp = [0.0; 3];
                    for i in 0..nb {
                        for r in 0..d {
                            disp[r] += vals[i] * xe[i * d + r];
                        }
                    }
                    for r in 0..d {
                        disp[r] -= baseline.x0_qp[idx * d + r];
                    }
                    let (xv, xg) = xi_and_grad(kind, &disp[..d], baseline.delta_qp[idx]);
                    res.limiting += wq * xv;
                    if want_grad {
                        for i in 0..nb {
                            for r in 0..d {
                                res.grad[i * d + r] += c * wq * xg[r] * vals[i];
                            }
                        }
                    }
                }
            }
            Some(res)
        })
        .collect();

    let mut raw = vec![0.0; n_terms];
    let mut lim = 0.0;
    let mut grad = if want_grad { Some(vec![0.0; x.len()]) } else { None };
    for (e, el) in per_element.into_iter().enumerate() {
        let el = el?;
        for (r, v) in raw.iter_mut().zip(&el.metric) {
            *r += v;
        }
        lim += el.limiting;
        if let Some(g) = grad.as_mut() {
            for (i, &n) in mesh.element(e).iter().enumerate() {
                for r in 0..d {
                    g[n * d + r] += el.grad[i * d + r];
                }
            }
        }
    }
    if let Some(g) = grad.as_mut() {
        baseline.zero_fixed(g);
    }
    let metric_parts: Vec<f64> = raw.iter().zip(&coef).map(|(r, k)| r * k).collect();
    let limiting_part = if kind == XiKind::None { 0.0 } else { c * lim };
    let total = metric_parts.iter().sum::<f64>() + limiting_part;
    Some((
        ObjectiveValue {
            total,
            metric_parts,
            limiting_part,
            feasible: true,
        },
        grad,
    ))
}

/// `F(x)`; an inverted quadrature point gives `feasible = false` and `+inf`.
pub fn eval_objective(x: &[f64], baseline: &Baseline, targets: &TargetField, config: &ObjectiveConfig) -> ObjectiveValue {
    evaluate(x, baseline, targets, config, false)
        .map(|(v, _)| v)
        .unwrap_or_else(|| ObjectiveValue::infeasible(config.terms.len()))
}

/// Value and gradient together.
pub fn eval_with_gradient(
    x: &[f64],
    baseline: &Baseline,
    targets: &TargetField,
    config: &ObjectiveConfig,
) -> Result<(ObjectiveValue, Vec<f64>)> {
    evaluate(x, baseline, targets, config, true)
        .map(|(v, g)| (v, g.expect("gradient requested")))
        .ok_or_else(|| {
            let m = baseline.mesh0.with_coords(x.to_vec());
            TmopError::Infeasible(worst_point(&m, &baseline.tab))
        })
}

/// Analytic `dF/dx` with `W` held fixed; fixed-node entries are zero.
pub fn objective_gradient(x: &[f64], baseline: &Baseline, targets: &TargetField, config: &ObjectiveConfig) -> Result<Vec<f64>> {
    eval_with_gradient(x, baseline, targets, config).map(|(_, g)| g)
}

/// Raw (unnormalized) metric integrals at `x`.
pub fn metric_integrals(x: &[f64], baseline: &Baseline, targets: &TargetField, config: &ObjectiveConfig) -> Option<Vec<f64>> {
    raw_metric_integrals(
        x,
        &baseline.mesh0,
        &baseline.quad,
        &baseline.tab,
        targets,
        &config.terms,
        &baseline.weight_qp,
    )
}

/// Normalized metric contribution of every element at `x`; they sum to the
/// total metric part.
pub fn element_metric_parts(x: &[f64], baseline: &Baseline, targets: &TargetField, config: &ObjectiveConfig) -> Option<Vec<f64>> {
    let mesh = &baseline.mesh0;
    let d = mesh.dim();
    let nq = baseline.quad.num_points();
    let inv_n = 1.0 / config.terms.len() as f64;
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let mut sum = 0.0;
            for q in 0..nq {
                let a = jacobian_from_grads(d, x, mesh.element(e), baseline.tab.grads(q));
                if !(a.det() > 0.0) {
                    return None;
                }
                let t = a * *targets.w_inv(e, q);
                let wq = baseline.quad.weights[q] * targets.det_w(e, q);
                for (s, term) in config.terms.iter().enumerate() {
                    let mu = eval_metric(term.metric, &t).value()?;
                    sum += wq * baseline.weight_qp[s][e * nq + q] * mu * inv_n / baseline.denominators[s];
                }
            }
            Some(sum)
        })
        .collect()
}

/// Central finite differences of `F` where the targets are rebuilt at every
/// perturbed position, capturing the dependence of `W` on `x`.
///
/// Costs two target builds per free coordinate; meant for small meshes.
pub fn full_fd_gradient(
    x: &[f64],
    baseline: &Baseline,
    builder: &dyn TargetBuilder,
    config: &ObjectiveConfig,
    step: f64,
) -> Result<Vec<f64>> {
    let d = baseline.mesh0.dim();
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    let f_at = |xs: &[f64]| -> Result<f64> {
        let m = baseline.mesh0.with_coords(xs.to_vec());
        let t = builder.build(&m, &baseline.quad)?;
        let v = eval_objective(xs, baseline, &t, config);
        if v.feasible {
            Ok(v.total)
        } else {
            Err(TmopError::Infeasible("finite-difference probe inverted an element".into()))
        }
    };
    for i in 0..x.len() {
        if baseline.fixed[i / d] {
            continue;
        }
        xp[i] = x[i] + step;
        let fp = f_at(&xp)?;
        xp[i] = x[i] - step;
        let fm = f_at(&xp)?;
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}

/// Minimum of `det T = det A / det W` over all quadrature points.
pub fn min_det_t(x: &[f64], baseline: &Baseline, targets: &TargetField) -> f64 {
    let mesh = &baseline.mesh0;
    let d = mesh.dim();
    (0..mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            (0..baseline.tab.num_points)
                .map(|q| {
                    jacobian_from_grads(d, x, mesh.element(e), baseline.tab.grads(q)).det() / targets.det_w(e, q)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Minimum of `det A` over all quadrature points.
pub fn min_det_a(x: &[f64], baseline: &Baseline) -> f64 {
    baseline.mesh0.min_det_jacobian_tab(x, &baseline.tab)
}

/// Largest displacement `|x_q - x0_q|` over the quadrature points.
pub fn max_quadrature_displacement(x: &[f64], baseline: &Baseline) -> f64 {
    let mesh = &baseline.mesh0;
    let d = mesh.dim();
    let nq = baseline.tab.num_points;
    let mut worst: f64 = 0.0;
    for e in 0..mesh.num_elements() {
        let conn = mesh.element(e);
        for q in 0..nq {
            let vals = baseline.tab.values(q);
            let idx = e * nq + q;
            let mut r2 = 0.0;
            for a in 0..d {
                let xa: f64 = conn.iter().zip(vals).map(|(&n, w)| x[n * d + a] * w).sum();
                let da = xa - baseline.x0_qp[idx * d + a];
                r2 += da * da;
            }
            worst = worst.max(r2.sqrt());
        }
    }
    worst
}

/// Largest nodal displacement `|x - x0|`.
pub fn max_displacement(x: &[f64], x0: &[f64], dim: usize) -> f64 {
    x.chunks(dim)
        .zip(x0.chunks(dim))
        .map(|(a, b)| crate::mesh::dist(a, b))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{perturb_interior, uniform_refine};
    use crate::targets::ideal_uniform_targets;

    fn setup(mesh: &Mesh, config: &ObjectiveConfig, with_size: bool) -> (Baseline, TargetField) {
        let q = config.quadrature(mesh);
        let t = ideal_uniform_targets(mesh, &q, with_size).unwrap();
        (make_baseline(mesh, &t, config).unwrap(), t)
    }

    #[test]
    fn xi_values() {
        assert_eq!(xi(XiKind::Quadratic, &[0.0, 0.0], 0.3).unwrap(), 0.0);
        assert!((xi(XiKind::Exponential, &[0.0, 0.0], 0.3).unwrap() - 4.539992976248485e-5).abs() < 1e-18);
        assert_eq!(xi(XiKind::Quadratic, &[0.6, 0.8], 1.0).unwrap(), 1.0);
        assert_eq!(xi(XiKind::Exponential, &[0.6, 0.8], 1.0).unwrap(), 1.0);
        assert!((xi(XiKind::Quadratic, &[0.7, 0.0], 0.7).unwrap() - 1.0).abs() < 1e-15);
        assert!((xi(XiKind::Exponential, &[0.0, 0.7], 0.7).unwrap() - 1.0).abs() < 1e-14);
        assert!(xi(XiKind::Quadratic, &[0.1, 0.0], 0.0).is_err());
        assert!(xi(XiKind::Quadratic, &[0.1, 0.0], -1.0).is_err());
        let big = xi(XiKind::Exponential, &[1.5, 0.0], 1.0).unwrap();
        assert!((big / 12.5f64.exp() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn limit_scale_rule() {
        let m = perturb_interior(&Mesh::unit_square(8, 1).unwrap(), 0.2, 1).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::Shape2).with_limiting(XiKind::Quadratic, SpatialScalar::Constant(0.1));
        let (b, _) = setup(&m, &cfg, false);
        assert_eq!(b.limit_scale, 1.0 / 64.0);
        let (b, _) = setup(&m, &cfg, true);
        assert!((b.limit_scale - 1.0).abs() < 1e-13);
    }

    #[test]
    fn normalized_at_start() {
        let m = perturb_interior(&Mesh::unit_square(4, 2).unwrap(), 0.25, 3).unwrap();
        let mut cfg = ObjectiveConfig::single(MetricId::Shape2).with_limiting(XiKind::Quadratic, SpatialScalar::Constant(0.1));
        cfg.terms.push(MetricTerm {
            metric: MetricId::ShapeSize9,
            weight: SpatialScalar::function(|p| 1.0 + p[0]),
        });
        let (b, t) = setup(&m, &cfg, true);
        let v = eval_objective(m.coords(), &b, &t, &cfg);
        assert!(v.feasible);
        for p in &v.metric_parts {
            assert!((p - 0.5).abs() < 1e-12);
        }
        assert_eq!(v.limiting_part, 0.0);
        assert!((v.total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_mesh_is_identity_normalized() {
        let m = Mesh::unit_square(3, 3).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::Shape2);
        let (b, t) = setup(&m, &cfg, false);
        assert!(b.identity_normalized[0]);
        assert_eq!(b.denominators[0], 1.0);
        let v = eval_objective(m.coords(), &b, &t, &cfg);
        assert!(v.total.abs() < 1e-12);
    }

    #[test]
    fn inverted_is_infeasible() {
        let m = Mesh::unit_square(2, 1).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::ShapeSize7);
        let (b, t) = setup(&perturb_interior(&m, 0.2, 1).unwrap(), &cfg, true);
        let mut x = b.x0().to_vec();
        // Push the centre node far outside.
        x[4 * 2] = 3.0;
        let v = eval_objective(&x, &b, &t, &cfg);
        assert!(!v.feasible && v.total.is_infinite());
        assert!(objective_gradient(&x, &b, &t, &cfg).is_err());
    }

    #[test]
    fn gradient_vanishes_at_uniform_minimizer() {
        let m = Mesh::unit_square(4, 2).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::Shape2);
        let (b, t) = setup(&m, &cfg, false);
        let g = objective_gradient(m.coords(), &b, &t, &cfg).unwrap();
        assert!(g.iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn integrates_with_target_measure() {
        // det W = 4 det A: weighting by det A would shrink the integral fourfold.
        let m = Mesh::unit_square(1, 1).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::Shape2);
        let q = cfg.quadrature(&m);
        let w = Mat::from_rows(2, &[2.0, 0.4, 0.0, 2.0]);
        let t = TargetField::uniform(1, q.num_points(), w, true).unwrap();
        let b = make_baseline(&m, &t, &cfg).unwrap();
        let raw = metric_integrals(m.coords(), &b, &t, &cfg).unwrap()[0];
        let tm = w.inverse().unwrap();
        let mu = tm.frob2() / (2.0 * tm.det()) - 1.0;
        assert!((raw - 4.0 * mu).abs() < 1e-13);
        assert!((raw - mu).abs() > 0.1 * raw);
    }

    #[test]
    fn limiting_uses_target_measure() {
        let m = Mesh::unit_square(1, 1).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::Shape2).with_limiting(XiKind::Quadratic, SpatialScalar::Constant(0.5));
        let q = cfg.quadrature(&m);
        let t = TargetField::uniform(1, q.num_points(), Mat::scaled_identity(2, 2.0), true).unwrap();
        let b = make_baseline(&m, &t, &cfg).unwrap();
        // A rigid shift of every node by 0.1 in x (fixed flags ignored by eval).
        let x: Vec<f64> = m.coords().chunks(2).flat_map(|p| [p[0] + 0.1, p[1]]).collect();
        let v = eval_objective(&x, &b, &t, &cfg);
        // c = 1/V = 1, integral of det W = 4, xi = 0.04
        assert!((v.limiting_part - 4.0 * 0.04).abs() < 1e-13);
    }

    #[test]
    fn refinement_keeps_normalization() {
        let m = perturb_interior(&Mesh::unit_square(2, 3).unwrap(), 0.15, 9).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::ShapeSize9);
        let mut mesh = m;
        for _ in 0..3 {
            let (b, t) = setup(&mesh, &cfg, true);
            let v = eval_objective(mesh.coords(), &b, &t, &cfg);
            assert!((v.metric_parts[0] - 1.0).abs() < 1e-12);
            mesh = uniform_refine(&mesh);
        }
    }

    #[test]
    fn exponential_limiting_dominates_past_delta() {
        let m0 = perturb_interior(&Mesh::unit_square(4, 2).unwrap(), 0.25, 12).unwrap();
        let delta = 0.01;
        let cfg = ObjectiveConfig::single(MetricId::Shape2).with_limiting(XiKind::Exponential, SpatialScalar::Constant(delta));
        let (b, t) = setup(&m0, &cfg, false);
        // Rigidly translate every interior node by 1.5 delta.
        let x: Vec<f64> = m0
            .coords()
            .chunks(2)
            .enumerate()
            .flat_map(|(n, p)| if m0.is_boundary(n) { [p[0], p[1]] } else { [p[0] + 1.5 * delta, p[1]] })
            .collect();
        let v = eval_objective(&x, &b, &t, &cfg);
        assert!(v.limiting_part > v.metric_sum(), "{v:?}");
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let m = perturb_interior(&Mesh::unit_square(6, 2).unwrap(), 0.25, 2).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::ShapeSize9).with_limiting(XiKind::Quadratic, SpatialScalar::Constant(0.1));
        let (b, t) = setup(&m, &cfg, true);
        let x: Vec<f64> = b.x0().iter().map(|v| v * 1.0001).collect();
        let (v1, g1) = eval_with_gradient(&x, &b, &t, &cfg).unwrap();
        let (v2, g2) = eval_with_gradient(&x, &b, &t, &cfg).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(g1, g2);
        assert_eq!(eval_objective(&x, &b, &t, &cfg).total, v1.total);
    }

    fn fd_check(mesh: &Mesh, cfg: &ObjectiveConfig, with_size: bool) {
        let (b, t) = setup(mesh, cfg, with_size);
        let d = mesh.dim();
        // Move away from x0 so the limiting term has a nonzero gradient.
        let x: Vec<f64> = b
            .x0()
            .chunks(d)
            .enumerate()
            .flat_map(|(n, p)| {
                let s = if mesh.is_boundary(n) { 0.0 } else { 0.01 };
                p.iter().enumerate().map(move |(a, v)| v + s * ((n * 7 + a * 3) as f64).sin()).collect::<Vec<_>>()
            })
            .collect();
        let g = objective_gradient(&x, &b, &t, cfg).unwrap();
        let h = 1e-6;
        let mut xp = x.clone();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            if b.fixed()[i / d] {
                assert_eq!(g[i], 0.0);
                continue;
            }
            xp[i] = x[i] + h;
            let fp = eval_objective(&xp, &b, &t, cfg).total;
            xp[i] = x[i] - h;
            let fm = eval_objective(&xp, &b, &t, cfg).total;
            xp[i] = x[i];
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * scale.max(1.0), "i={i} fd={fd} an={}", g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_2d() {
        let m = perturb_interior(&Mesh::unit_square(3, 2).unwrap(), 0.2, 5).unwrap();
        for metric in MetricId::ALL {
            for kind in [XiKind::None, XiKind::Quadratic, XiKind::Exponential] {
                let cfg = ObjectiveConfig::single(metric).with_limiting(kind, SpatialScalar::Constant(0.05));
                fd_check(&m, &cfg, true);
            }
        }
        let mut cfg = ObjectiveConfig::single(MetricId::Shape2)
            .with_limiting(XiKind::Quadratic, SpatialScalar::function(|p| 0.02 + 0.1 * p[1]));
        cfg.terms.push(MetricTerm {
            metric: MetricId::ShapeSize7,
            weight: SpatialScalar::function(|p| p[0] * p[0]),
        });
        fd_check(&m, &cfg, false);
    }

    #[test]
    fn gradient_matches_finite_differences_3d() {
        let m = perturb_interior(&Mesh::unit_cube(2, 2).unwrap(), 0.2, 8).unwrap();
        for metric in [MetricId::ShapeSize7, MetricId::ShapeSize9] {
            let cfg = ObjectiveConfig::single(metric).with_limiting(XiKind::Exponential, SpatialScalar::Constant(0.05));
            fd_check(&m, &cfg, true);
        }
    }
}
