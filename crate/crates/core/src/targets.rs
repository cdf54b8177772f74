//! Target Jacobians `W` at every quadrature point.

use std::f64::consts::FRAC_PI_2;
use std::sync::Mutex;

use crate::error::{Result, TmopError};
use crate::field::{eval_field_with, transfer_field_with, DiscreteField, PointLocator, TransferReport};
use crate::linalg::Mat;
use crate::mesh::{jacobian_from_grads, Mesh, QuadratureRule, Tabulation};

/// Per-element, per-quadrature-point target matrices.
#[derive(Clone, Debug)]
pub struct TargetField {
    num_elements: usize,
    num_points: usize,
    w: Vec<Mat>,
    w_inv: Vec<Mat>,
    det_w: Vec<f64>,
    /// `W` carries size information.
    pub volumetric: bool,
}

impl TargetField {
    /// `w` is indexed by `element * num_points + q`.
    pub fn new(num_elements: usize, num_points: usize, w: Vec<Mat>, volumetric: bool) -> Result<Self> {
        if w.len() != num_elements * num_points {
            return Err(TmopError::invalid(format!(
                "expected {} target matrices, got {}",
                num_elements * num_points,
                w.len()
            )));
        }
        let mut w_inv = Vec::with_capacity(w.len());
        let mut det_w = Vec::with_capacity(w.len());
        for (i, m) in w.iter().enumerate() {
            let det = m.det();
            if !(det > 0.0) || !det.is_finite() {
                return Err(TmopError::invalid(format!(
                    "target matrix at element {} point {} has det {det}",
                    i / num_points,
                    i % num_points
                )));
            }
            w_inv.push(m.inverse().expect("positive determinant"));
            det_w.push(det);
        }
        Ok(TargetField {
            num_elements,
            num_points,
            w,
            w_inv,
            det_w,
            volumetric,
        })
    }

    pub fn uniform(num_elements: usize, num_points: usize, w: Mat, volumetric: bool) -> Result<Self> {
        Self::new(num_elements, num_points, vec![w; num_elements * num_points], volumetric)
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    #[inline]
    pub fn w(&self, e: usize, q: usize) -> &Mat {
        &self.w[e * self.num_points + q]
    }

    #[inline]
    pub fn w_inv(&self, e: usize, q: usize) -> &Mat {
        &self.w_inv[e * self.num_points + q]
    }

    #[inline]
    pub fn det_w(&self, e: usize, q: usize) -> f64 {
        self.det_w[e * self.num_points + q]
    }

    pub fn check_shape(&self, mesh: &Mesh, quad: &QuadratureRule) -> Result<()> {
        if self.num_elements != mesh.num_elements() || self.num_points != quad.num_points() {
            return Err(TmopError::invalid(format!(
                "target field covers {}x{} points, mesh/quadrature needs {}x{}",
                self.num_elements,
                self.num_points,
                mesh.num_elements(),
                quad.num_points()
            )));
        }
        Ok(())
    }
}

/// `W = I`, or `W = (V/N_E)^{1/d} I` when `with_size` is set.
pub fn ideal_uniform_targets(mesh0: &Mesh, quad: &QuadratureRule, with_size: bool) -> Result<TargetField> {
    let d = mesh0.dim();
    let ne = mesh0.num_elements();
    if with_size {
        let v = mesh0.volume(quad);
        let h = (v / ne as f64).powf(1.0 / d as f64);
        TargetField::uniform(ne, quad.num_points(), Mat::scaled_identity(d, h), true)
    } else {
        TargetField::uniform(ne, quad.num_points(), Mat::identity(d), false)
    }
}

/// 2D target from size `s`, orientation `theta`, skew angle `phi` and aspect
/// ratio `r`, multiplied in that order:
/// `sqrt(s) I * R(theta) * [1 cos(phi); 0 sin(phi)] * diag(1/sqrt(r), sqrt(r))`.
pub fn composed_target(s: f64, theta: f64, phi: f64, r: f64) -> Result<Mat> {
    if !(s > 0.0) || !(r > 0.0) || !(phi > 0.0 && phi < std::f64::consts::PI) || !theta.is_finite() {
        return Err(TmopError::invalid(format!(
            "composed target needs s > 0, r > 0, phi in (0, pi); got s={s}, phi={phi}, r={r}"
        )));
    }
    let vol = Mat::scaled_identity(2, s.sqrt());
    let (st, ct) = theta.sin_cos();
    let orient = Mat::from_rows(2, &[ct, -st, st, ct]);
    let (sp, cp) = phi.sin_cos();
    let skew = Mat::from_rows(2, &[1.0, cp, 0.0, sp]);
    let aspect = Mat::from_diag(&[1.0 / r.sqrt(), r.sqrt()]);
    Ok(vol * orient * skew * aspect)
}

/// Smallest local size from the volume balance
/// `V_g / s + (V - V_g) / (alpha s) = N_E`.
pub fn size_from_volumes(v_g: f64, v: f64, num_elements: usize, alpha: f64) -> f64 {
    (v_g + (v - v_g) / alpha) / num_elements as f64
}

/// `V_g` (integral of `g`) and `V` on `mesh0`.
pub fn indicator_volumes(mesh0: &Mesh, g: &DiscreteField, quad: &QuadratureRule) -> Result<(f64, f64)> {
    g.check_host(mesh0)?;
    let tab = Tabulation::new(mesh0.basis(), quad);
    let d = mesh0.dim();
    let (mut vg, mut v) = (0.0, 0.0);
    for e in 0..mesh0.num_elements() {
        let conn = mesh0.element(e);
        for q in 0..quad.num_points() {
            let det = jacobian_from_grads(d, mesh0.coords(), conn, tab.grads(q)).det();
            let gq: f64 = conn.iter().zip(tab.values(q)).map(|(&n, w)| g.values()[n] * w).sum();
            vg += quad.weights[q] * det * gq;
            v += quad.weights[q] * det;
        }
    }
    Ok((vg, v))
}

/// Small local size `s` for an indicator `g` on the Lagrangian mesh.
pub fn size_from_indicator(mesh0: &Mesh, g: &DiscreteField, alpha: f64, quad: &QuadratureRule) -> Result<f64> {
    check_alpha(alpha)?;
    let (vg, v) = indicator_volumes(mesh0, g, quad)?;
    Ok(size_from_volumes(vg, v, mesh0.num_elements(), alpha))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 1.0) {
        return Err(TmopError::invalid(format!("size ratio alpha must be >= 1, got {alpha}")));
    }
    Ok(())
}

/// `W = [g s + (1 - g) alpha s]^{1/d} I`.
pub fn adaptive_size_target(g: f64, s: f64, alpha: f64, dim: usize) -> Result<Mat> {
    check_alpha(alpha)?;
    if !(0.0..=1.0).contains(&g) || !(s > 0.0) {
        return Err(TmopError::invalid(format!("adaptive size target needs g in [0,1], s > 0; got g={g}, s={s}")));
    }
    let det = g * s + (1.0 - g) * alpha * s;
    Ok(Mat::scaled_identity(dim, det.powf(1.0 / dim as f64)))
}

/// Parameters for gradient-driven interface targets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceParams {
    pub alpha: f64,
    pub eps_r: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for InterfaceParams {
    fn default() -> Self {
        InterfaceParams {
            alpha: 10.0,
            eps_r: 1e-8,
            r_min: 0.125,
            r_max: 8.0,
        }
    }
}

impl InterfaceParams {
    /// Aspect ratio from the physical gradient of the interface field.
    pub fn aspect_ratio(&self, gx: f64, gy: f64) -> f64 {
        if gx.abs() <= self.eps_r && gy.abs() <= self.eps_r {
            return 1.0;
        }
        (gx.abs() / gy.abs().max(self.eps_r)).clamp(self.r_min, self.r_max)
    }
}

/// Physical gradients of `field` at every quadrature point of `mesh`.
fn quadrature_gradients(mesh: &Mesh, field: &DiscreteField, quad: &QuadratureRule) -> Result<Vec<[f64; 3]>> {
    field.check_host(mesh)?;
    let tab = Tabulation::new(mesh.basis(), quad);
    let d = mesh.dim();
    let mut out = Vec::with_capacity(mesh.num_elements() * quad.num_points());
    for e in 0..mesh.num_elements() {
        let conn = mesh.element(e);
        for q in 0..quad.num_points() {
            let a = jacobian_from_grads(d, mesh.coords(), conn, tab.grads(q));
            let (_, g) = eval_field_with(field, conn, tab.values(q), tab.grads(q), &a, d)
                .ok_or_else(|| TmopError::Infeasible(format!("element {e} point {q} has det A <= 0")))?;
            out.push(g);
        }
    }
    Ok(out)
}

/// Normalizations of the interface targets, fixed on the Lagrangian mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterfaceScale {
    /// Small size `s` of the size law.
    pub size: f64,
    /// `max |grad eta|` over the quadrature points.
    pub grad_max: f64,
}

/// Targets adapted to an interface field `eta` (2D).
///
/// The size indicator is `g = |grad eta| / max |grad eta|` used in the
/// adaptive size law; the aspect ratio follows the ratio of gradient
/// components; skew is ideal and orientation zero. When `scale` is `None` the
/// normalizations are computed from `mesh` itself.
pub fn interface_targets(
    mesh: &Mesh,
    eta: &DiscreteField,
    quad: &QuadratureRule,
    params: &InterfaceParams,
    scale: Option<InterfaceScale>,
) -> Result<TargetField> {
    if mesh.dim() != 2 {
        return Err(TmopError::invalid("interface targets are only defined in 2D"));
    }
    check_alpha(params.alpha)?;
    let scale = match scale {
        Some(sc) => sc,
        None => interface_scale(mesh, eta, quad, params)?,
    };
    let grads = quadrature_gradients(mesh, eta, quad)?;
    let indicator = interface_indicator(&grads, params.eps_r, scale.grad_max);
    let s = scale.size;
    let w = grads
        .iter()
        .zip(&indicator)
        .map(|(g, &gi)| {
            let local = gi * s + (1.0 - gi) * params.alpha * s;
            composed_target(local, 0.0, FRAC_PI_2, params.aspect_ratio(g[0], g[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    TargetField::new(mesh.num_elements(), quad.num_points(), w, true)
}

fn gradient_max(grads: &[[f64; 3]]) -> f64 {
    grads.iter().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max)
}

/// `min(|grad eta| / gmax, 1)`; identically zero when `gmax` does not
/// exceed `eps` (a numerically constant field).
fn interface_indicator(grads: &[[f64; 3]], eps: f64, gmax: f64) -> Vec<f64> {
    grads
        .iter()
        .map(|g| if gmax > eps { (g[0].hypot(g[1]) / gmax).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

/// Size and gradient normalization of the interface targets on the
/// Lagrangian mesh.
pub fn interface_scale(mesh0: &Mesh, eta: &DiscreteField, quad: &QuadratureRule, params: &InterfaceParams) -> Result<InterfaceScale> {
    let grads = quadrature_gradients(mesh0, eta, quad)?;
    let grad_max = gradient_max(&grads);
    let indicator = interface_indicator(&grads, params.eps_r, grad_max);
    let tab = Tabulation::new(mesh0.basis(), quad);
    let nq = quad.num_points();
    let d = mesh0.dim();
    let (mut vg, mut v) = (0.0, 0.0);
    for e in 0..mesh0.num_elements() {
        for q in 0..nq {
            let det = jacobian_from_grads(d, mesh0.coords(), mesh0.element(e), tab.grads(q)).det();
            vg += quad.weights[q] * det * indicator[e * nq + q];
            v += quad.weights[q] * det;
        }
    }
    Ok(InterfaceScale {
        size: size_from_volumes(vg, v, mesh0.num_elements(), params.alpha),
        grad_max,
    })
}

/// Target construction selected by name in run configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TargetKind {
    /// `W = I`.
    Ideal,
    /// `W = (V / N_E)^{1/d} I`.
    IdealSize,
    /// Two-level sizes from an indicator field.
    AdaptiveSize,
    /// Interface-aligned aspect ratio and orientation from a material indicator.
    Interface,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Ideal => "ideal",
            TargetKind::IdealSize => "ideal-size",
            TargetKind::AdaptiveSize => "adaptive-size",
            TargetKind::Interface => "interface",
        }
    }

    pub fn needs_indicator(self) -> bool {
        matches!(self, TargetKind::AdaptiveSize | TargetKind::Interface)
    }
}

impl std::fmt::Display for TargetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TargetKind {
    type Err = TmopError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ideal" => Ok(TargetKind::Ideal),
            "ideal-size" => Ok(TargetKind::IdealSize),
            "adaptive-size" => Ok(TargetKind::AdaptiveSize),
            "interface" => Ok(TargetKind::Interface),
            other => Err(TmopError::invalid(format!(
                "unknown target '{other}' (expected ideal, ideal-size, adaptive-size or interface)"
            ))),
        }
    }
}

/// Builds the target constructor for `kind` on the Lagrangian mesh.
pub fn make_target_builder(
    kind: TargetKind,
    mesh0: &Mesh,
    indicator: Option<&DiscreteField>,
    alpha: f64,
    quad: &QuadratureRule,
) -> Result<Box<dyn TargetBuilder>> {
    let need = || {
        indicator
            .cloned()
            .ok_or_else(|| TmopError::invalid(format!("target '{kind}' needs an indicator field")))
    };
    Ok(match kind {
        TargetKind::Ideal => Box::new(IdealTargets { with_size: false }),
        TargetKind::IdealSize => Box::new(IdealTargets { with_size: true }),
        TargetKind::AdaptiveSize => Box::new(AdaptiveSizeTargets::new(mesh0, need()?, alpha, quad)?),
        TargetKind::Interface => {
            let params = InterfaceParams {
                alpha,
                ..InterfaceParams::default()
            };
            Box::new(InterfaceTargets::new(mesh0, need()?, params, quad)?)
        }
    })
}

/// Produces targets for a (possibly moved) mesh.
pub trait TargetBuilder: Send + Sync {
    fn build(&self, mesh: &Mesh, quad: &QuadratureRule) -> Result<TargetField>;

    /// Targets depend on the node positions and must be refreshed as the mesh moves.
    fn is_adaptive(&self) -> bool {
        false
    }
}

/// A precomputed target field.
#[derive(Clone, Debug)]
pub struct FixedTargets(pub TargetField);

impl TargetBuilder for FixedTargets {
    fn build(&self, mesh: &Mesh, quad: &QuadratureRule) -> Result<TargetField> {
        self.0.check_shape(mesh, quad)?;
        Ok(self.0.clone())
    }
}

/// Ideal shape targets, optionally carrying the average element size.
#[derive(Clone, Copy, Debug)]
pub struct IdealTargets {
    pub with_size: bool,
}

impl TargetBuilder for IdealTargets {
    fn build(&self, mesh: &Mesh, quad: &QuadratureRule) -> Result<TargetField> {
        ideal_uniform_targets(mesh, quad, self.with_size)
    }
}

/// Isotropic size targets driven by an indicator field on the Lagrangian mesh.
#[derive(Debug)]
pub struct AdaptiveSizeTargets {
    locator: PointLocator,
    indicator: DiscreteField,
    size: f64,
    alpha: f64,
    last_report: Mutex<TransferReport>,
}

impl AdaptiveSizeTargets {
    pub fn new(mesh0: &Mesh, indicator: DiscreteField, alpha: f64, quad: &QuadratureRule) -> Result<Self> {
        let size = size_from_indicator(mesh0, &indicator, alpha, quad)?;
        Ok(AdaptiveSizeTargets {
            locator: PointLocator::new(mesh0),
            indicator,
            size,
            alpha,
            last_report: Mutex::new(TransferReport::default()),
        })
    }

    pub fn size(&self) -> f64 {
        self.size
    }

    pub fn last_transfer_report(&self) -> TransferReport {
        self.last_report.lock().expect("report lock").clone()
    }
}

impl TargetBuilder for AdaptiveSizeTargets {
    fn build(&self, mesh: &Mesh, quad: &QuadratureRule) -> Result<TargetField> {
        let (g, report) = transfer_field_with(&self.locator, &self.indicator, mesh)?;
        *self.last_report.lock().expect("report lock") = report;
        let tab = Tabulation::new(mesh.basis(), quad);
        let d = mesh.dim();
        let mut w = Vec::with_capacity(mesh.num_elements() * quad.num_points());
        for e in 0..mesh.num_elements() {
            let conn = mesh.element(e);
            for q in 0..quad.num_points() {
                let gq: f64 = conn.iter().zip(tab.values(q)).map(|(&n, v)| g.values()[n] * v).sum();
                w.push(adaptive_size_target(gq.clamp(0.0, 1.0), self.size, self.alpha, d)?);
            }
        }
        TargetField::new(mesh.num_elements(), quad.num_points(), w, true)
    }

    fn is_adaptive(&self) -> bool {
        true
    }
}

/// Size and aspect-ratio targets following the gradient of an interface field.
#[derive(Debug)]
pub struct InterfaceTargets {
    locator: PointLocator,
    eta: DiscreteField,
    scale: InterfaceScale,
    params: InterfaceParams,
    last_report: Mutex<TransferReport>,
}

impl InterfaceTargets {
    pub fn new(mesh0: &Mesh, eta: DiscreteField, params: InterfaceParams, quad: &QuadratureRule) -> Result<Self> {
        if mesh0.dim() != 2 {
            return Err(TmopError::invalid("interface targets are only defined in 2D"));
        }
        let scale = interface_scale(mesh0, &eta, quad, &params)?;
        Ok(InterfaceTargets {
            locator: PointLocator::new(mesh0),
            eta,
            scale,
            params,
            last_report: Mutex::new(TransferReport::default()),
        })
    }

    pub fn scale(&self) -> InterfaceScale {
        self.scale
    }

    pub fn last_transfer_report(&self) -> TransferReport {
        self.last_report.lock().expect("report lock").clone()
    }
}

impl TargetBuilder for InterfaceTargets {
    fn build(&self, mesh: &Mesh, quad: &QuadratureRule) -> Result<TargetField> {
        let (eta, report) = transfer_field_with(&self.locator, &self.eta, mesh)?;
        *self.last_report.lock().expect("report lock") = report;
        interface_targets(mesh, &eta, quad, &self.params, Some(self.scale))
    }

    fn is_adaptive(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{gauss_legendre_rule, uniform_refine, Lcg64};

    #[test]
    fn ideal_targets_with_size() {
        let m = Mesh::unit_square(2, 2).unwrap();
        let q = m.default_quadrature();
        let t = ideal_uniform_targets(&m, &q, true).unwrap();
        assert!(t.volumetric);
        assert!((*t.w(3, 5) - Mat::scaled_identity(2, 0.5)).max_abs() < 1e-14);
        assert!((t.det_w(0, 0) - 0.25).abs() < 1e-14);
        let t0 = ideal_uniform_targets(&m, &q, false).unwrap();
        assert!(!t0.volumetric);
        assert_eq!(*t0.w(1, 1), Mat::identity(2));
        let r = uniform_refine(&m);
        let tr = ideal_uniform_targets(&r, &q, true).unwrap();
        assert!((tr.det_w(0, 0) - 0.25 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn composed_examples() {
        let w = composed_target(1.0, 0.0, FRAC_PI_2, 1.0).unwrap();
        assert!((w - Mat::identity(2)).max_abs() < 1e-15);
        let w = composed_target(1.0, 0.0, FRAC_PI_2, 4.0).unwrap();
        assert!((w - Mat::from_diag(&[0.5, 2.0])).max_abs() < 1e-15);
        assert!(composed_target(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(composed_target(1.0, 0.0, 3.2, 1.0).is_err());
        assert!(composed_target(1.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn composed_determinant_identity() {
        let mut rng = Lcg64::new(99);
        for _ in 0..100 {
            let s = 0.01 + 5.0 * rng.next_f64();
            let theta = std::f64::consts::TAU * rng.next_f64();
            let phi = 0.05 + 3.0 * rng.next_f64();
            let r = 0.1 + 9.0 * rng.next_f64();
            let w = composed_target(s, theta, phi, r).unwrap();
            assert!((w.det() - s * phi.sin()).abs() <= 1e-12 * s.max(1.0));
        }
    }

    #[test]
    fn size_balance_example() {
        let s = size_from_volumes(0.2, 1.0, 100, 10.0);
        assert!((s - 0.0028).abs() < 1e-15);
        assert!((0.2 / s + 0.8 / (10.0 * s) - 100.0).abs() < 1e-10);
    }

    #[test]
    fn size_from_indicator_endpoints() {
        let m = Mesh::unit_square(4, 2).unwrap();
        let q = m.default_quadrature();
        let g = DiscreteField::from_fn(&m, |p| if p[1] > 0.5 { 1.0 } else { 0.3 });
        let s1 = size_from_indicator(&m, &g, 1.0, &q).unwrap();
        assert!((s1 - 1.0 / 16.0).abs() < 1e-14);
        let ones = DiscreteField::constant(&m, 1.0);
        let s = size_from_indicator(&m, &ones, 10.0, &q).unwrap();
        assert!((s - 1.0 / 16.0).abs() < 1e-14);
        assert!(size_from_indicator(&m, &ones, 0.5, &q).is_err());
    }

    #[test]
    fn adaptive_size_examples() {
        let s = 0.0028;
        let w1 = adaptive_size_target(1.0, s, 10.0, 2).unwrap();
        assert!((w1.get(0, 0) - s.sqrt()).abs() < 1e-15);
        let w0 = adaptive_size_target(0.0, s, 10.0, 2).unwrap();
        assert!((w0.get(0, 0) - (10.0 * s).sqrt()).abs() < 1e-15);
        let wh = adaptive_size_target(0.5, s, 10.0, 2).unwrap();
        assert!((wh.det() - 0.0154).abs() < 1e-15);
        assert!((wh.get(0, 0) - 0.12409673645990857).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for i in 0..=20 {
            let det = adaptive_size_target(i as f64 / 20.0, s, 10.0, 3).unwrap().det();
            assert!(det < prev);
            prev = det;
        }
    }

    #[test]
    fn interface_constant_field_is_uniform() {
        let m = Mesh::unit_square(3, 2).unwrap();
        let q = m.default_quadrature();
        let eta = DiscreteField::constant(&m, 0.4);
        let t = interface_targets(&m, &eta, &q, &InterfaceParams::default(), None).unwrap();
        let w0 = *t.w(0, 0);
        assert!((w0.get(0, 0) - w0.get(1, 1)).abs() < 1e-14 && w0.get(0, 1).abs() < 1e-15);
        for e in 0..m.num_elements() {
            for p in 0..q.num_points() {
                assert!((*t.w(e, p) - w0).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interface_linear_field_pegs_aspect() {
        let m = Mesh::unit_square(3, 2).unwrap();
        let q = m.default_quadrature();
        let eta = DiscreteField::from_fn(&m, |p| p[0]);
        let t = interface_targets(&m, &eta, &q, &InterfaceParams::default(), None).unwrap();
        let w = t.w(4, 2);
        // diag(1/sqrt(8), sqrt(8)) scaled by sqrt(s); skew pi/2 leaves it diagonal.
        assert!((w.get(1, 1) / w.get(0, 0) - 8.0).abs() < 1e-12);
        assert!(w.get(0, 1).abs() < 1e-14);
        assert!(interface_targets(&Mesh::unit_cube(1, 1).unwrap(), &DiscreteField::constant(&Mesh::unit_cube(1, 1).unwrap(), 0.0), &gauss_legendre_rule(2, 3), &InterfaceParams::default(), None).is_err());
    }

    #[test]
    fn interface_band_minimum_size() {
        let m = Mesh::unit_square(8, 2).unwrap();
        let q = m.default_quadrature();
        let eta = DiscreteField::from_fn(&m, |p| 0.5 * (1.0 + ((p[1] - 0.5) / 0.1).tanh()));
        let t = interface_targets(&m, &eta, &q, &InterfaceParams::default(), None).unwrap();
        let grads = quadrature_gradients(&m, &eta, &q).unwrap();
        let nq = q.num_points();
        let (mut argmin_det, mut argmax_grad) = (0, 0);
        for i in 0..m.num_elements() * nq {
            if t.det_w(i / nq, i % nq) < t.det_w(argmin_det / nq, argmin_det % nq) {
                argmin_det = i;
            }
            if grads[i][1].abs() > grads[argmax_grad][1].abs() {
                argmax_grad = i;
            }
        }
        assert_eq!(argmin_det, argmax_grad);
    }

    #[test]
    fn rejects_nonpositive_targets() {
        assert!(TargetField::uniform(1, 1, Mat::from_diag(&[1.0, -1.0]), false).is_err());
    }
}
