//! Minimization of the objective over the free node coordinates.
//!
//! Newton-Krylov: conjugate gradients on finite-difference Hessian-vector
//! products of the analytic gradient, truncated on negative curvature,
//! followed by a backtracking line search that rejects any step inverting a
//! quadrature point. A limited-memory secant method is the fallback mode.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TmopError};
use crate::mesh::Mesh;
use crate::objective::{
    eval_objective, eval_with_gradient, full_fd_gradient, make_baseline, max_displacement, max_quadrature_displacement, min_det_a, min_det_t,
    objective_gradient, Baseline, ObjectiveConfig, ObjectiveValue,
};
use crate::targets::{TargetBuilder, TargetField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverMode {
    NewtonKrylov,
    QuasiNewton,
}

impl FromStr for SolverMode {
    type Err = TmopError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "newton" | "newton-krylov" => Ok(SolverMode::NewtonKrylov),
            "quasi-newton" | "lbfgs" => Ok(SolverMode::QuasiNewton),
            other => Err(TmopError::invalid(format!(
                "unknown solver mode '{other}' (expected newton or lbfgs)"
            ))),
        }
    }
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverMode::NewtonKrylov => "newton",
            SolverMode::QuasiNewton => "lbfgs",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetUpdate {
    /// Rebuild adaptive targets after every accepted step.
    Lagged,
    FrozenAtStart,
}

impl FromStr for TargetUpdate {
    type Err = TmopError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lagged" => Ok(TargetUpdate::Lagged),
            "frozen" => Ok(TargetUpdate::FrozenAtStart),
            other => Err(TmopError::invalid(format!(
                "unknown target update '{other}' (expected lagged or frozen)"
            ))),
        }
    }
}

impl fmt::Display for TargetUpdate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetUpdate::Lagged => "lagged",
            TargetUpdate::FrozenAtStart => "frozen",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub max_iterations: usize,
    /// Required drop of the gradient max-norm relative to its initial value.
    pub gradient_tolerance: f64,
    /// Gradient max-norms at or below this count as stationary.
    pub gradient_abs_tolerance: f64,
    pub max_linear_iterations: usize,
    /// Relative residual at which conjugate gradients stop; with
    /// `adaptive_forcing` this is the tightest tolerance used.
    pub linear_tolerance: f64,
    /// Loosen the linear tolerance while the gradient is far from zero.
    pub adaptive_forcing: bool,
    pub contraction: f64,
    pub max_halvings: usize,
    pub armijo: f64,
    /// Relative decrease of `F` below which the iteration has plateaued.
    pub plateau_tolerance: f64,
    pub mode: SolverMode,
    pub target_update: TargetUpdate,
    pub lbfgs_history: usize,
    /// Jacobi-precondition conjugate gradients with the Hessian diagonal.
    pub precondition: bool,
    /// Differentiate `F` including the dependence of `W` on `x`. Quasi-Newton only.
    pub full_fd_gradient: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            max_iterations: 100,
            gradient_tolerance: 1e-8,
            gradient_abs_tolerance: 1e-12,
            max_linear_iterations: 200,
            linear_tolerance: 1e-6,
            adaptive_forcing: true,
            contraction: 0.5,
            max_halvings: 30,
            armijo: 1e-4,
            plateau_tolerance: 1e-12,
            mode: SolverMode::NewtonKrylov,
            target_update: TargetUpdate::Lagged,
            lbfgs_history: 10,
            precondition: true,
            full_fd_gradient: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tolerance", self.gradient_tolerance),
            ("linear_tolerance", self.linear_tolerance),
            ("armijo", self.armijo),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(TmopError::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.contraction > 0.0 && self.contraction < 1.0) {
            return Err(TmopError::invalid(format!("contraction must lie in (0, 1), got {}", self.contraction)));
        }
        if self.max_linear_iterations == 0 || self.max_halvings == 0 || self.lbfgs_history == 0 {
            return Err(TmopError::invalid("iteration caps must be positive"));
        }
        if self.full_fd_gradient && self.mode == SolverMode::NewtonKrylov {
            return Err(TmopError::invalid("full finite-difference gradients require the quasi-Newton mode"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
    LineSearchStalled,
}

/// State after an accepted step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `F` before the step, under the targets the step was computed with.
    pub objective_before: f64,
    /// `F` after the step under the same targets.
    pub objective: ObjectiveValue,
    pub step_length: f64,
    /// Gradient max-norm at the start of the step.
    pub gradient_norm: f64,
    pub min_det_a: f64,
    pub min_det_t: f64,
    pub max_displacement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub initial: ObjectiveValue,
    /// Final value under the final targets.
    pub final_value: ObjectiveValue,
    pub initial_gradient_norm: f64,
    pub final_gradient_norm: f64,
    pub history: Vec<IterationRecord>,
    /// Largest nodal displacement `|x - x0|`.
    pub max_displacement: f64,
    /// Largest displacement of a quadrature point, where the limiting term acts.
    pub max_quadrature_displacement: f64,
    pub initial_min_det_a: f64,
    pub final_min_det_a: f64,
    pub termination: Termination,
}

/// Loosest linear tolerance under adaptive forcing.
const MAX_FORCING: f64 = 0.1;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + alpha * b).collect()
}

/// `H v` by central differences of the analytic gradient.
///
/// The step shrinks until both probes are feasible.
pub fn hessian_vec_product(
    x: &[f64],
    v: &[f64],
    baseline: &Baseline,
    targets: &TargetField,
    config: &ObjectiveConfig,
) -> Result<Vec<f64>> {
    let vn = inf_norm(v);
    if vn == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let mut eps = 1e-6 * inf_norm(x).max(1.0) / vn;
    for _ in 0..20 {
        let gp = objective_gradient(&axpy(x, eps, v), baseline, targets, config);
        let gm = objective_gradient(&axpy(x, -eps, v), baseline, targets, config);
        if let (Ok(gp), Ok(gm)) = (gp, gm) {
            return Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect());
        }
        eps *= 0.1;
    }
    Err(TmopError::Infeasible("no feasible finite-difference probe for the Hessian product".into()))
}

/// Greedy colouring of the nodes such that no two nodes of one colour
/// share an element.
pub fn node_coloring(mesh: &Mesh) -> Vec<Vec<usize>> {
    let node_elements = mesh.node_elements();
    let mut color = vec![usize::MAX; mesh.num_nodes()];
    let mut used = Vec::new();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for n in 0..mesh.num_nodes() {
        used.clear();
        for &e in &node_elements[n] {
            for &m in mesh.element(e) {
                if color[m] != usize::MAX {
                    used.push(color[m]);
                }
            }
        }
        let c = (0..).find(|c| !used.contains(c)).unwrap();
        color[n] = c;
        if c == classes.len() {
            classes.push(Vec::new());
        }
        classes[c].push(n);
    }
    classes
}

/// Hessian diagonal from one product per colour and axis.
pub fn hessian_diagonal(
    x: &[f64],
    colors: &[Vec<usize>],
    baseline: &Baseline,
    targets: &TargetField,
    config: &ObjectiveConfig,
) -> Result<Vec<f64>> {
    let d = baseline.mesh0().dim();
    let mut diag = vec![0.0; x.len()];
    let mut v = vec![0.0; x.len()];
    for class in colors {
        for a in 0..d {
            let mut any = false;
            for &n in class {
                if !baseline.fixed()[n] {
                    v[n * d + a] = 1.0;
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let hv = hessian_vec_product(x, &v, baseline, targets, config)?;
            for &n in class {
                if !baseline.fixed()[n] {
                    diag[n * d + a] = hv[n * d + a];
                    v[n * d + a] = 0.0;
                }
            }
        }
    }
    Ok(diag)
}

/// Truncated conjugate gradients for `H p = -g`, optionally preconditioned
/// by a diagonal.
///
/// Stops on negative curvature and returns the current iterate, or the
/// preconditioned steepest-descent direction if curvature is non-positive on
/// the first direction. Entries where `g` is zero stay zero.
pub fn newton_step(
    gradient: &[f64],
    hess_vec: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    diagonal: Option<&[f64]>,
    params: &SolverParams,
) -> Result<Vec<f64>> {
    let n = gradient.len();
    // Non-positive or tiny diagonal entries are floored to keep M SPD.
    let inv_m: Vec<f64> = match diagonal {
        Some(diag) => {
            let floor = 1e-8 * inf_norm(diag);
            diag.iter().map(|&h| if h > floor && floor > 0.0 { 1.0 / h } else if floor > 0.0 { 1.0 / floor } else { 1.0 }).collect()
        }
        None => vec![1.0; n],
    };
    let mut p = vec![0.0; n];
    let mut r: Vec<f64> = gradient.iter().map(|g| -g).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_m).map(|(a, b)| a * b).collect();
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let stop = params.linear_tolerance * dot(&r, &r).sqrt();
    if rz == 0.0 {
        return Ok(p);
    }
    for k in 0..params.max_linear_iterations {
        let hd = hess_vec(&d)?;
        let curvature = dot(&d, &hd);
        if !(curvature > 0.0) {
            if k == 0 {
                return Ok(d);
            }
            break;
        }
        let alpha = rz / curvature;
        for i in 0..n {
            p[i] += alpha * d[i];
            r[i] -= alpha * hd[i];
        }
        if dot(&r, &r).sqrt() <= stop {
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_m[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
        rz = rz_new;
    }
    Ok(p)
}

/// Backtracking from `alpha = 1`.
///
/// `eval` returns `None` for infeasible trial points. Returns the accepted
/// step and value, or `None` after the allowed halvings.
pub fn line_search(
    x: &[f64],
    direction: &[f64],
    f0: f64,
    slope: f64,
    eval: &mut dyn FnMut(&[f64]) -> Option<f64>,
    params: &SolverParams,
) -> Option<(f64, f64, Vec<f64>)> {
    if !(slope < 0.0) {
        return None;
    }
    let mut alpha = 1.0;
    for _ in 0..=params.max_halvings {
        let xt = axpy(x, alpha, direction);
        if let Some(ft) = eval(&xt) {
            if ft <= f0 + params.armijo * alpha * slope {
                return Some((alpha, ft, xt));
            }
        }
        alpha *= params.contraction;
    }
    None
}

struct Lbfgs {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl Lbfgs {
    fn new(cap: usize) -> Self {
        Lbfgs {
            pairs: VecDeque::with_capacity(cap),
            cap,
        }
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt()) {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

fn gradient_at(
    x: &[f64],
    baseline: &Baseline,
    targets: &TargetField,
    builder: &dyn TargetBuilder,
    config: &ObjectiveConfig,
    params: &SolverParams,
) -> Result<(ObjectiveValue, Vec<f64>)> {
    let (v, g) = eval_with_gradient(x, baseline, targets, config)?;
    if params.full_fd_gradient {
        let h = 1e-7 * inf_norm(x).max(1.0);
        return Ok((v, full_fd_gradient(x, baseline, builder, config, h)?));
    }
    Ok((v, g))
}

/// Optimizes the free nodes of `mesh`, which also serves as the Lagrangian
/// mesh `x0`. Fixed nodes are returned bit-identical.
pub fn optimize(
    mesh: &Mesh,
    builder: &dyn TargetBuilder,
    config: &ObjectiveConfig,
    params: &SolverParams,
) -> Result<(Mesh, SolverReport)> {
    params.validate()?;
    let quad = config.quadrature(mesh);
    let mut targets = builder.build(mesh, &quad)?;
    let baseline = make_baseline(mesh, &targets, config)?;
    let d = mesh.dim();
    let x0 = mesh.coords().to_vec();
    let mut x = x0.clone();

    let (initial, mut g) = gradient_at(&x, &baseline, &targets, builder, config, params)?;
    let g0 = inf_norm(&g);
    let initial_min_det_a = min_det_a(&x, &baseline);
    let mut value = initial.clone();
    let mut history = Vec::new();
    let mut lbfgs = Lbfgs::new(params.lbfgs_history);
    let mut termination = Termination::MaxIterations;
    let mut gnorm = g0;
    let mut prev_gnorm = g0;
    let mut forcing = MAX_FORCING;
    let colors = if params.precondition && params.mode == SolverMode::NewtonKrylov {
        node_coloring(mesh)
    } else {
        Vec::new()
    };

    for iteration in 0..=params.max_iterations {
        gnorm = inf_norm(&g);
        if gnorm <= params.gradient_abs_tolerance || gnorm <= params.gradient_tolerance * g0 {
            termination = Termination::Converged;
            break;
        }
        if iteration == params.max_iterations {
            break;
        }

        let mut p = match params.mode {
            SolverMode::NewtonKrylov => {
                let diag = if params.precondition {
                    Some(hessian_diagonal(&x, &colors, &baseline, &targets, config)?)
                } else {
                    None
                };
                let mut step_params = params.clone();
                if params.adaptive_forcing {
                    if iteration > 0 {
                        // Eisenstat-Walker choice 2 with its safeguard.
                        let ratio = gnorm / prev_gnorm;
                        let candidate = 0.9 * ratio * ratio;
                        let safeguard = 0.9 * forcing * forcing;
                        forcing = if safeguard > 0.1 { candidate.max(safeguard) } else { candidate };
                        forcing = forcing.clamp(params.linear_tolerance, MAX_FORCING);
                    }
                    step_params.linear_tolerance = forcing.max(params.linear_tolerance);
                }
                let mut hv = |v: &[f64]| hessian_vec_product(&x, v, &baseline, &targets, config);
                newton_step(&g, &mut hv, diag.as_deref(), &step_params)?
            }
            SolverMode::QuasiNewton => lbfgs.direction(&g),
        };
        baseline.zero_fixed(&mut p);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            p = g.iter().map(|v| -v).collect();
            slope = dot(&g, &p);
        }

        let f0 = value.total;
        let mut eval = |xt: &[f64]| {
            let v = eval_objective(xt, &baseline, &targets, config);
            v.feasible.then_some(v.total)
        };
        let Some((alpha, _, x_new)) = line_search(&x, &p, f0, slope, &mut eval, params) else {
            termination = Termination::LineSearchStalled;
            break;
        };
        let after = eval_objective(&x_new, &baseline, &targets, config);

        let rebuild = builder.is_adaptive() && params.target_update == TargetUpdate::Lagged;
        if rebuild {
            targets = builder.build(&mesh.with_coords(x_new.clone()), &quad)?;
        }
        let (v_new, g_new) = gradient_at(&x_new, &baseline, &targets, builder, config, params)?;
        if params.mode == SolverMode::QuasiNewton {
            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            lbfgs.push(s, y);
        }
        x = x_new;
        g = g_new;
        prev_gnorm = gnorm;
        history.push(IterationRecord {
            iteration: iteration + 1,
            objective_before: f0,
            objective: after.clone(),
            step_length: alpha,
            gradient_norm: gnorm,
            min_det_a: min_det_a(&x, &baseline),
            min_det_t: min_det_t(&x, &baseline, &targets),
            max_displacement: max_displacement(&x, &x0, d),
        });
        value = v_new;
        if f0 - after.total <= params.plateau_tolerance * f0.abs() {
            gnorm = inf_norm(&g);
            termination = Termination::Converged;
            break;
        }
    }

    let report = SolverReport {
        iterations: history.len(),
        initial,
        final_value: value,
        initial_gradient_norm: g0,
        final_gradient_norm: gnorm,
        max_displacement: max_displacement(&x, &x0, d),
        max_quadrature_displacement: max_quadrature_displacement(&x, &baseline),
        initial_min_det_a,
        final_min_det_a: min_det_a(&x, &baseline),
        history,
        termination,
    };
    Ok((mesh.with_coords(x), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::perturb_interior;
    use crate::metrics::MetricId;
    use crate::objective::{SpatialScalar, XiKind};
    use crate::targets::{ideal_uniform_targets, IdealTargets};

    fn ideal() -> IdealTargets {
        IdealTargets { with_size: false }
    }

    #[test]
    fn params_validation() {
        assert!(SolverParams::default().validate().is_ok());
        let bad = SolverParams {
            contraction: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverParams {
            full_fd_gradient: true,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn optimal_input_is_unchanged() {
        let m = Mesh::unit_square(4, 2).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::Shape2);
        let (out, rep) = optimize(&m, &ideal(), &cfg, &SolverParams::default()).unwrap();
        assert!(rep.iterations <= 1);
        for (a, b) in out.coords().iter().zip(m.coords()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_direction_is_not_searched() {
        let mut eval = |_: &[f64]| Some(0.0);
        assert!(line_search(&[0.0; 4], &[0.0; 4], 1.0, 0.0, &mut eval, &SolverParams::default()).is_none());
    }

    #[test]
    fn line_search_stops_before_inversion() {
        // Feasible only for alpha < 0.3.
        let mut eval = |x: &[f64]| if x[0] < 0.3 { Some(-x[0]) } else { None };
        let (alpha, _, _) = line_search(&[0.0], &[1.0], 0.0, -1.0, &mut eval, &SolverParams::default()).unwrap();
        assert!(alpha < 0.3 && alpha > 0.0);
    }

    #[test]
    fn infeasible_start_names_the_point() {
        let m = Mesh::unit_square(2, 1).unwrap();
        let mut x = m.coords().to_vec();
        x[8] = 3.0;
        let bad = m.with_coords(x);
        let err = optimize(&bad, &ideal(), &ObjectiveConfig::single(MetricId::Shape2), &SolverParams::default())
            .unwrap_err();
        assert!(err.to_string().contains("element"), "{err}");
    }

    #[test]
    fn quadratic_limiting_is_one_newton_step() {
        let m = perturb_interior(&Mesh::unit_square(3, 2).unwrap(), 0.2, 4).unwrap();
        let mut cfg = ObjectiveConfig::single(MetricId::Shape2).with_limiting(XiKind::Quadratic, SpatialScalar::Constant(0.1));
        cfg.terms[0].weight = SpatialScalar::Constant(0.0);
        let q = cfg.quadrature(&m);
        let t = ideal_uniform_targets(&m, &q, false).unwrap();
        let b = make_baseline(&m, &t, &cfg).unwrap();
        let x: Vec<f64> = b
            .x0()
            .chunks(2)
            .enumerate()
            .flat_map(|(n, p)| if m.is_boundary(n) { [p[0], p[1]] } else { [p[0] + 0.01, p[1] - 0.02] })
            .collect();
        let g = objective_gradient(&x, &b, &t, &cfg).unwrap();
        let mut hv = |v: &[f64]| hessian_vec_product(&x, v, &b, &t, &cfg);
        let params = SolverParams {
            linear_tolerance: 1e-10,
            ..Default::default()
        };
        let p = newton_step(&g, &mut hv, None, &params).unwrap();
        let x1 = axpy(&x, 1.0, &p);
        for (a, b) in x1.iter().zip(b.x0()) {
            assert!((a - b).abs() < 1e-8, "{a} {b}");
        }
    }

    #[test]
    fn hessian_product_matches_dense_fd() {
        let m = perturb_interior(&Mesh::unit_square(2, 2).unwrap(), 0.2, 6).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::ShapeSize9).with_limiting(XiKind::Quadratic, SpatialScalar::Constant(0.1));
        let q = cfg.quadrature(&m);
        let t = ideal_uniform_targets(&m, &q, true).unwrap();
        let b = make_baseline(&m, &t, &cfg).unwrap();
        let x = b.x0().to_vec();
        let n = x.len();
        let mut v: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.1).collect();
        b.zero_fixed(&mut v);
        let hv = hessian_vec_product(&x, &v, &b, &t, &cfg).unwrap();
        // Dense Hessian from second differences of F.
        let h = 1e-4;
        let f = |xs: &[f64]| eval_objective(xs, &b, &t, &cfg).total;
        let free: Vec<usize> = (0..n).filter(|i| !b.fixed()[i / 2]).collect();
        let mut dense_hv = vec![0.0; n];
        for &i in &free {
            for &j in &free {
                let mut xpp = x.clone();
                xpp[i] += h;
                xpp[j] += h;
                let mut xpm = x.clone();
                xpm[i] += h;
                xpm[j] -= h;
                let mut xmp = x.clone();
                xmp[i] -= h;
                xmp[j] += h;
                let mut xmm = x.clone();
                xmm[i] -= h;
                xmm[j] -= h;
                let hij = (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h * h);
                dense_hv[i] += hij * v[j];
            }
        }
        let scale = inf_norm(&dense_hv);
        for i in 0..n {
            assert!((hv[i] - dense_hv[i]).abs() <= 1e-4 * scale, "{i}: {} vs {}", hv[i], dense_hv[i]);
        }
    }

    #[test]
    fn history_is_monotone_and_feasible() {
        let m = perturb_interior(&Mesh::unit_square(4, 2).unwrap(), 0.3, 17).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::ShapeSize9).with_limiting(XiKind::Quadratic, SpatialScalar::Constant(0.1));
        for mode in [SolverMode::NewtonKrylov, SolverMode::QuasiNewton] {
            let params = SolverParams {
                mode,
                ..Default::default()
            };
            let (out, rep) = optimize(&m, &IdealTargets { with_size: true }, &cfg, &params).unwrap();
            assert!(rep.iterations > 0);
            assert!(rep.final_value.total < rep.initial.total);
            for h in &rep.history {
                assert!(h.objective.total <= h.objective_before);
                assert!(h.min_det_a > 0.0 && h.min_det_t > 0.0);
            }
            for n in 0..m.num_nodes() {
                if m.is_boundary(n) {
                    assert_eq!(out.node(n), m.node(n));
                }
            }
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let m = perturb_interior(&Mesh::unit_square(4, 2).unwrap(), 0.3, 5).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::ShapeSize9);
        let run = || optimize(&m, &IdealTargets { with_size: true }, &cfg, &SolverParams::default()).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a.coords(), b.coords());
        assert_eq!(ra, rb);
    }

    #[test]
    fn coloring_separates_element_neighbours() {
        for m in [Mesh::unit_square(4, 2).unwrap(), Mesh::unit_cube(2, 2).unwrap()] {
            let colors = node_coloring(&m);
            let mut color = vec![0; m.num_nodes()];
            for (c, class) in colors.iter().enumerate() {
                for &n in class {
                    color[n] = c;
                }
            }
            assert_eq!(colors.iter().map(Vec::len).sum::<usize>(), m.num_nodes());
            for e in 0..m.num_elements() {
                let mut seen: Vec<usize> = m.element(e).iter().map(|&n| color[n]).collect();
                seen.sort();
                seen.dedup();
                assert_eq!(seen.len(), m.nodes_per_element());
            }
        }
    }

    #[test]
    fn diagonal_matches_unit_products() {
        let m = perturb_interior(&Mesh::unit_square(3, 2).unwrap(), 0.2, 3).unwrap();
        let cfg = ObjectiveConfig::single(MetricId::ShapeSize7);
        let q = cfg.quadrature(&m);
        let t = ideal_uniform_targets(&m, &q, true).unwrap();
        let b = make_baseline(&m, &t, &cfg).unwrap();
        let x = b.x0().to_vec();
        let diag = hessian_diagonal(&x, &node_coloring(&m), &b, &t, &cfg).unwrap();
        for i in 0..x.len() {
            let mut e = vec![0.0; x.len()];
            if b.fixed()[i / 2] {
                assert_eq!(diag[i], 0.0);
                continue;
            }
            e[i] = 1.0;
            let hv = hessian_vec_product(&x, &e, &b, &t, &cfg).unwrap();
            assert!((hv[i] - diag[i]).abs() <= 1e-6 * hv[i].abs());
        }
    }
}
