//! Nodal scalar fields and their transfer between meshes of equal topology.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TmopError};
use crate::linalg::Mat;
use crate::mesh::{dist, Mesh};

/// Scalar field interpolated with the mesh's kinematic basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(TmopError::invalid(format!(
                "field has {} values but the mesh has {} nodes",
                values.len(),
                mesh.num_nodes()
            )));
        }
        Ok(DiscreteField { values })
    }

    /// An indicator field; values are clamped into `[0, 1]`.
    pub fn indicator(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        let clamped = values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::new(mesh, clamped)
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        DiscreteField {
            values: vec![value; mesh.num_nodes()],
        }
    }

    /// Samples `f` at the physical position of every node.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(&[f64]) -> f64) -> Self {
        DiscreteField {
            values: (0..mesh.num_nodes()).map(|n| f(mesh.node(n))).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_host(&self, mesh: &Mesh) -> Result<()> {
        if self.values.len() != mesh.num_nodes() {
            return Err(TmopError::invalid(format!(
                "field with {} values does not live on a mesh with {} nodes",
                self.values.len(),
                mesh.num_nodes()
            )));
        }
        Ok(())
    }

    /// Interpolated value at a reference point of element `e`.
    pub fn value_at(&self, mesh: &Mesh, e: usize, ref_point: &[f64]) -> f64 {
        let mut v = vec![0.0; mesh.nodes_per_element()];
        mesh.basis().eval_values(ref_point, &mut v);
        mesh.element(e).iter().zip(&v).map(|(&n, w)| self.values[n] * w).sum()
    }
}

/// Value and physical gradient of `field` at a reference point of element `e`.
///
/// The gradient is `A^{-t}` applied to the reference gradient; an element with
/// `det A <= 0` at the point yields an infeasibility error.
pub fn eval_field(field: &DiscreteField, mesh: &Mesh, e: usize, ref_point: &[f64]) -> Result<(f64, [f64; 3])> {
    field.check_host(mesh)?;
    let d = mesh.dim();
    let nb = mesh.nodes_per_element();
    let mut v = vec![0.0; nb];
    let mut g = vec![0.0; nb * d];
    mesh.basis().eval(ref_point, &mut v, &mut g);
    let conn = mesh.element(e);
    let a = crate::mesh::jacobian_from_grads(d, mesh.coords(), conn, &g);
    eval_field_with(field, conn, &v, &g, &a, d).ok_or_else(|| {
        TmopError::Infeasible(format!("element {e} has det A <= 0 at reference point {ref_point:?}"))
    })
}

/// Field value and physical gradient from pre-evaluated basis data.
pub(crate) fn eval_field_with(
    field: &DiscreteField,
    conn: &[usize],
    values: &[f64],
    ref_grads: &[f64],
    a: &Mat,
    d: usize,
) -> Option<(f64, [f64; 3])> {
    if !(a.det() > 0.0) {
        return None;
    }
    let mut val = 0.0;
    let mut rg = [0.0; 3];
    for (i, &n) in conn.iter().enumerate() {
        let f = field.values[n];
        val += f * values[i];
        for c in 0..d {
            rg[c] += f * ref_grads[i * d + c];
        }
    }
    let inv_t = a.inverse()?.transpose();
    Some((val, inv_t.mul_vec(&rg[..d])))
}

/// Where a physical point was found on the source mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub element: usize,
    pub ref_point: [f64; 3],
    /// The point was outside every candidate element and was projected to the
    /// nearest point of the reference cube.
    pub projected: bool,
    /// Newton inversion failed; the location is the nearest lattice sample.
    pub fallback: bool,
}

/// Summary of a field transfer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub projected_nodes: Vec<usize>,
    pub fallback_nodes: Vec<usize>,
}

const INVERSE_MAP_ITERS: usize = 25;
const INSIDE_TOL: f64 = 1e-10;

/// Physical point location on a fixed mesh by Newton inversion of the
/// element maps, searching outward from a seed element set.
#[derive(Clone, Debug)]
pub struct PointLocator {
    mesh: Mesh,
    node_elements: Vec<Vec<usize>>,
    element_neighbors: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let node_elements = mesh.node_elements();
        let mut element_neighbors = vec![Vec::new(); mesh.num_elements()];
        for (e, nbrs) in element_neighbors.iter_mut().enumerate() {
            for &n in mesh.element(e) {
                nbrs.extend(node_elements[n].iter().copied().filter(|&o| o != e));
            }
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        PointLocator {
            mesh: mesh.clone(),
            node_elements,
            element_neighbors,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Newton iteration on `Phi_E(xi) = p`. Returns the final reference point
    /// and whether the iteration converged.
    pub fn inverse_map(&self, e: usize, p: &[f64]) -> ([f64; 3], bool) {
        let mesh = &self.mesh;
        let d = mesh.dim();
        let nb = mesh.nodes_per_element();
        let conn = mesh.element(e);
        let mut v = vec![0.0; nb];
        let mut g = vec![0.0; nb * d];
        let mut xi = [0.5; 3];
        for _ in 0..INVERSE_MAP_ITERS {
            mesh.basis().eval(&xi[..d], &mut v, &mut g);
            let mut r = [0.0; 3];
            for (i, &n) in conn.iter().enumerate() {
                for a in 0..d {
                    r[a] += v[i] * mesh.coords()[n * d + a];
                }
            }
            for a in 0..d {
                r[a] -= p[a];
            }
            let jac = crate::mesh::jacobian_from_grads(d, mesh.coords(), conn, &g);
            let Some(inv) = jac.inverse() else {
                return (xi, false);
            };
            let step = inv.mul_vec(&r[..d]);
            let mut step_norm: f64 = 0.0;
            for a in 0..d {
                // Keep iterates in a neighbourhood of the cube so the
                // polynomial map stays well-behaved.
                xi[a] = (xi[a] - step[a]).clamp(-0.5, 1.5);
                step_norm = step_norm.max(step[a].abs());
            }
            if step_norm < 1e-13 {
                return (xi, true);
            }
        }
        (xi, false)
    }

    fn inside(xi: &[f64]) -> bool {
        xi.iter().all(|&t| (-INSIDE_TOL..=1.0 + INSIDE_TOL).contains(&t))
    }

    /// Locates `p`, searching breadth-first from the elements around
    /// `seed_node` (or from element 0 without a seed).
    pub fn locate(&self, p: &[f64], seed_node: Option<usize>) -> Location {
        let mesh = &self.mesh;
        let d = mesh.dim();
        let ne = mesh.num_elements();
        let mut visited = vec![false; ne];
        let mut queue: VecDeque<usize> = VecDeque::new();
        match seed_node {
            Some(n) => queue.extend(self.node_elements[n].iter().copied()),
            None => queue.push_back(0),
        }
        for &e in &queue {
            visited[e] = true;
        }
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        let mut any_converged = false;
        loop {
            while let Some(e) = queue.pop_front() {
                let (xi, ok) = self.inverse_map(e, p);
                if ok {
                    any_converged = true;
                    if Self::inside(&xi[..d]) {
                        let mut r = xi;
                        for t in r.iter_mut().take(d) {
                            *t = t.clamp(0.0, 1.0);
                        }
                        return Location {
                            element: e,
                            ref_point: r,
                            projected: false,
                            fallback: false,
                        };
                    }
                    let mut c = xi;
                    for t in c.iter_mut().take(d) {
                        *t = t.clamp(0.0, 1.0);
                    }
                    let x = mesh.map_point(e, &c[..d]);
                    let dd = dist(&x[..d], p);
                    if best.is_none_or(|b| dd < b.0) {
                        best = Some((dd, e, c));
                    }
                }
                for &o in &self.element_neighbors[e] {
                    if !visited[o] {
                        visited[o] = true;
                        queue.push_back(o);
                    }
                }
            }
            // Disconnected meshes: continue from any unvisited element.
            match visited.iter().position(|v| !v) {
                Some(e) => {
                    visited[e] = true;
                    queue.push_back(e);
                }
                None => break,
            }
        }
        if any_converged {
            let (_, e, c) = best.expect("a converged candidate exists");
            return Location {
                element: e,
                ref_point: c,
                projected: true,
                fallback: false,
            };
        }
        self.nearest_sample(p)
    }

    /// Nearest point of a 5^d reference lattice over all elements.
    fn nearest_sample(&self, p: &[f64]) -> Location {
        let mesh = &self.mesh;
        let d = mesh.dim();
        let mut best = (f64::INFINITY, 0usize, [0.0; 3]);
        for e in 0..mesh.num_elements() {
            for s in 0..5usize.pow(d as u32) {
                let mut xi = [0.0; 3];
                let mut rem = s;
                for t in xi.iter_mut().take(d) {
                    *t = (rem % 5) as f64 / 4.0;
                    rem /= 5;
                }
                let x = mesh.map_point(e, &xi[..d]);
                let dd = dist(&x[..d], p);
                if dd < best.0 {
                    best = (dd, e, xi);
                }
            }
        }
        Location {
            element: best.1,
            ref_point: best.2,
            projected: true,
            fallback: true,
        }
    }
}

/// Interpolates `field` (living on the locator's mesh) at every node of
/// `current`, which must share its topology.
pub fn transfer_field_with(
    locator: &PointLocator,
    field: &DiscreteField,
    current: &Mesh,
) -> Result<(DiscreteField, TransferReport)> {
    let source = locator.mesh();
    field.check_host(source)?;
    if current.num_nodes() != source.num_nodes()
        || current.connectivity() != source.connectivity()
        || current.degree() != source.degree()
    {
        return Err(TmopError::invalid("transfer requires meshes with identical topology"));
    }
    let mut report = TransferReport::default();
    let mut values = Vec::with_capacity(current.num_nodes());
    for n in 0..current.num_nodes() {
        let p = current.node(n);
        if p == source.node(n) {
            values.push(field.values[n]);
            continue;
        }
        let loc = locator.locate(p, Some(n));
        if loc.fallback {
            report.fallback_nodes.push(n);
        } else if loc.projected {
            report.projected_nodes.push(n);
        }
        values.push(field.value_at(source, loc.element, &loc.ref_point[..source.dim()]));
    }
    Ok((DiscreteField { values }, report))
}

/// One-shot transfer of a field on `mesh0` to `current`.
pub fn transfer_field(field: &DiscreteField, mesh0: &Mesh, current: &Mesh) -> Result<(DiscreteField, TransferReport)> {
    transfer_field_with(&PointLocator::new(mesh0), field, current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{perturb_interior, Lcg64};

    #[test]
    fn constant_field() {
        let m = perturb_interior(&Mesh::unit_square(3, 2).unwrap(), 0.2, 1).unwrap();
        let f = DiscreteField::constant(&m, 1.0);
        let (v, g) = eval_field(&f, &m, 4, &[0.3, 0.6]).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
    }

    #[test]
    fn linear_reproduction() {
        let m = perturb_interior(&Mesh::unit_square(3, 3).unwrap(), 0.3, 2).unwrap();
        let f = DiscreteField::from_fn(&m, |p| p[0]);
        for e in 0..m.num_elements() {
            let (_, g) = eval_field(&f, &m, e, &[0.37, 0.81]).unwrap();
            assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12, "{g:?}");
        }
    }

    #[test]
    fn gradient_matches_physical_finite_differences() {
        let m = perturb_interior(&Mesh::unit_square(2, 2).unwrap(), 0.2, 8).unwrap();
        let mut rng = Lcg64::new(3);
        let f = DiscreteField::new(&m, (0..m.num_nodes()).map(|_| rng.next_symmetric()).collect()).unwrap();
        let loc = PointLocator::new(&m);
        let e = 2;
        let xi = [0.4, 0.55];
        let (_, g) = eval_field(&f, &m, e, &xi).unwrap();
        let p = m.map_point(e, &xi);
        let h = 1e-6;
        for a in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            let (xp, _) = loc.inverse_map(e, &pp[..2]);
            let (xm, _) = loc.inverse_map(e, &pm[..2]);
            let fd = (f.value_at(&m, e, &xp[..2]) - f.value_at(&m, e, &xm[..2])) / (2.0 * h);
            assert!((fd - g[a]).abs() <= 1e-6 * g[a].abs().max(1.0), "{fd} vs {}", g[a]);
        }
    }

    #[test]
    fn inverted_point_is_infeasible() {
        let m = Mesh::unit_square(1, 1).unwrap();
        let mut c = m.coords().to_vec();
        c.swap(0, 2);
        c.swap(1, 3);
        let m = m.with_coords(c);
        let f = DiscreteField::constant(&m, 0.0);
        assert!(matches!(eval_field(&f, &m, 0, &[0.1, 0.1]), Err(TmopError::Infeasible(_))));
    }

    #[test]
    fn identity_transfer() {
        let m = perturb_interior(&Mesh::unit_square(4, 3).unwrap(), 0.2, 4).unwrap();
        let f = DiscreteField::from_fn(&m, |p| (3.0 * p[0]).sin() * p[1]);
        let (t, rep) = transfer_field(&f, &m, &m).unwrap();
        for (a, b) in t.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(rep.fallback_nodes.is_empty());
    }

    #[test]
    fn affine_transfer_is_exact() {
        let m0 = perturb_interior(&Mesh::unit_square(4, 2).unwrap(), 0.2, 5).unwrap();
        // Affine contraction of the whole mesh into the interior of the source.
        let cur = m0.with_coords(
            m0.coords()
                .chunks(2)
                .flat_map(|p| {
                    let (x, y) = (p[0] - 0.5, p[1] - 0.5);
                    [0.5 + 0.9 * x + 0.05 * y, 0.5 - 0.03 * x + 0.85 * y]
                })
                .collect(),
        );
        let f = DiscreteField::from_fn(&m0, |p| 2.0 * p[0] - 0.5 * p[1] + 0.25);
        let (t, rep) = transfer_field(&f, &m0, &cur).unwrap();
        assert!(rep.fallback_nodes.is_empty());
        for n in 0..cur.num_nodes() {
            let p = cur.node(n);
            let exact = 2.0 * p[0] - 0.5 * p[1] + 0.25;
            assert!((t.values()[n] - exact).abs() < 1e-10, "node {n}");
        }
    }

    #[test]
    fn small_perturbation_is_lipschitz() {
        let m0 = Mesh::unit_square(6, 2).unwrap();
        let f = DiscreteField::from_fn(&m0, |p| (2.0 * p[0]).sin() + p[1] * p[1]);
        let cur = perturb_interior(&m0, 0.1, 19).unwrap();
        let (t, _) = transfer_field(&f, &m0, &cur).unwrap();
        // |grad f| <= sqrt(2^2 + 2^2)
        let lip = 8f64.sqrt();
        for n in 0..m0.num_nodes() {
            let disp = dist(cur.node(n), m0.node(n));
            assert!((t.values()[n] - f.values()[n]).abs() <= lip * disp * 1.05 + 1e-12);
        }
    }
}
