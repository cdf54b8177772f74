//! High-order quadrilateral and hexahedral meshes.

mod basis;
mod perturb;
mod quadrature;
mod refine;

use std::collections::HashMap;

use rayon::prelude::*;

pub use basis::{gauss_lobatto_points, shape_functions, LagrangeBasis};
pub use perturb::{perturb_interior, Lcg64};
pub use quadrature::{gauss_legendre_1d, gauss_legendre_rule, QuadratureRule};
pub use refine::uniform_refine;

use crate::error::{Result, TmopError};
use crate::linalg::Mat;

/// A conforming high-order mesh of tensor-product elements.
///
/// Coordinates are stored node-major: node `i` occupies
/// `coords[i*dim..(i+1)*dim]`. Element connectivity lists `(degree+1)^dim`
/// node indices per element in the lexicographic order of [`LagrangeBasis`].
#[derive(Clone, Debug)]
pub struct Mesh {
    dim: usize,
    degree: usize,
    coords: Vec<f64>,
    elements: Vec<usize>,
    boundary: Vec<bool>,
    basis: LagrangeBasis,
}

impl Mesh {
    /// Validates the connectivity and computes the boundary node set.
    pub fn new(dim: usize, degree: usize, coords: Vec<f64>, elements: Vec<usize>) -> Result<Self> {
        let basis = LagrangeBasis::new(degree, dim)?;
        if !coords.len().is_multiple_of(dim) {
            return Err(TmopError::InvalidMesh(format!(
                "coordinate array length {} is not a multiple of dim {dim}",
                coords.len()
            )));
        }
        let nb = basis.num_nodes();
        if elements.is_empty() || !elements.len().is_multiple_of(nb) {
            return Err(TmopError::InvalidMesh(format!(
                "connectivity length {} is not a positive multiple of {nb}",
                elements.len()
            )));
        }
        let num_nodes = coords.len() / dim;
        let mut referenced = vec![false; num_nodes];
        for (e, conn) in elements.chunks(nb).enumerate() {
            for (k, &n) in conn.iter().enumerate() {
                if n >= num_nodes {
                    return Err(TmopError::InvalidMesh(format!(
                        "element {e} references node {n} but the mesh has {num_nodes} nodes"
                    )));
                }
                if conn[..k].contains(&n) {
                    return Err(TmopError::InvalidMesh(format!("element {e} repeats node {n}")));
                }
                referenced[n] = true;
            }
        }
        if let Some(n) = referenced.iter().position(|r| !r) {
            return Err(TmopError::InvalidMesh(format!("node {n} is not referenced by any element")));
        }
        let mut mesh = Mesh {
            dim,
            degree,
            coords,
            elements,
            boundary: Vec::new(),
            basis,
        };
        mesh.boundary = mesh.compute_boundary();
        Ok(mesh)
    }

    /// Structured box mesh `[0,lengths[0]] x ... ` with `n[a]` elements per axis.
    pub fn structured(n: &[usize], lengths: &[f64], degree: usize) -> Result<Self> {
        let dim = n.len();
        if lengths.len() != dim {
            return Err(TmopError::invalid("lengths and element counts differ in dimension"));
        }
        if n.contains(&0) {
            return Err(TmopError::invalid("element counts must be positive"));
        }
        let basis = LagrangeBasis::new(degree, dim)?;
        let gll = basis.nodes_1d().to_vec();
        let k = degree;
        let lattice: Vec<usize> = n.iter().map(|&ni| ni * k + 1).collect();
        let total: usize = lattice.iter().product();
        let mut coords = Vec::with_capacity(total * dim);
        for g in 0..total {
            let mut rem = g;
            for a in 0..dim {
                let idx = rem % lattice[a];
                rem /= lattice[a];
                let (el, loc) = if idx == lattice[a] - 1 {
                    (n[a] - 1, k)
                } else {
                    (idx / k, idx % k)
                };
                coords.push((el as f64 + gll[loc]) / n[a] as f64 * lengths[a]);
            }
        }
        let nb = basis.num_nodes();
        let num_el: usize = n.iter().product();
        let mut elements = Vec::with_capacity(num_el * nb);
        for e in 0..num_el {
            let mut eidx = [0usize; 3];
            let mut rem = e;
            for a in 0..dim {
                eidx[a] = rem % n[a];
                rem /= n[a];
            }
            for i in 0..nb {
                let mut rem = i;
                let mut g = 0;
                let mut stride = 1;
                for a in 0..dim {
                    let li = rem % (k + 1);
                    rem /= k + 1;
                    g += (eidx[a] * k + li) * stride;
                    stride *= lattice[a];
                }
                elements.push(g);
            }
        }
        Mesh::new(dim, degree, coords, elements)
    }

    pub fn unit_square(n: usize, degree: usize) -> Result<Self> {
        Self::structured(&[n, n], &[1.0, 1.0], degree)
    }

    pub fn unit_cube(n: usize, degree: usize) -> Result<Self> {
        Self::structured(&[n, n, n], &[1.0, 1.0, 1.0], degree)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len() / self.nodes_per_element()
    }

    pub fn nodes_per_element(&self) -> usize {
        self.basis.num_nodes()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let nb = self.nodes_per_element();
        &self.elements[e * nb..(e + 1) * nb]
    }

    pub fn connectivity(&self) -> &[usize] {
        &self.elements
    }

    pub fn boundary_nodes(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    /// Same topology with new coordinates.
    pub fn with_coords(&self, coords: Vec<f64>) -> Mesh {
        assert_eq!(coords.len(), self.coords.len());
        Mesh {
            coords,
            ..self.clone()
        }
    }

    pub fn set_coords(&mut self, coords: &[f64]) {
        self.coords.copy_from_slice(coords);
    }

    /// Local indices of the `2^dim` element corners, in lexicographic order.
    pub fn corner_local_indices(&self) -> Vec<usize> {
        let p1 = self.degree + 1;
        (0..1usize << self.dim)
            .map(|c| {
                let mut idx = 0;
                let mut stride = 1;
                for a in 0..self.dim {
                    if c >> a & 1 == 1 {
                        idx += self.degree * stride;
                    }
                    stride *= p1;
                }
                idx
            })
            .collect()
    }

    /// Nodes on faces that belong to exactly one element.
    fn compute_boundary(&self) -> Vec<bool> {
        let p1 = self.degree + 1;
        let corners = self.corner_local_indices();
        let mut face_count: HashMap<Vec<usize>, usize> = HashMap::new();
        let faces_of = |conn: &[usize]| -> Vec<(usize, usize, Vec<usize>)> {
            let mut out = Vec::new();
            for a in 0..self.dim {
                for side in 0..2 {
                    let mut key: Vec<usize> = (0..corners.len())
                        .filter(|c| (c >> a & 1) == side)
                        .map(|c| conn[corners[c]])
                        .collect();
                    key.sort_unstable();
                    out.push((a, side, key));
                }
            }
            out
        };
        for e in 0..self.num_elements() {
            for (_, _, key) in faces_of(self.element(e)) {
                *face_count.entry(key).or_insert(0) += 1;
            }
        }
        let mut boundary = vec![false; self.num_nodes()];
        for e in 0..self.num_elements() {
            let conn = self.element(e);
            for (a, side, key) in faces_of(conn) {
                if face_count[&key] >= 2 {
                    continue;
                }
                let fixed = side * self.degree;
                for (i, &n) in conn.iter().enumerate() {
                    let ia = (i / p1.pow(a as u32)) % p1;
                    if ia == fixed {
                        boundary[n] = true;
                    }
                }
            }
        }
        boundary
    }

    /// Physical image of `ref_point` under the element map.
    pub fn map_point(&self, e: usize, ref_point: &[f64]) -> [f64; 3] {
        let nb = self.nodes_per_element();
        let mut v = vec![0.0; nb];
        self.basis.eval_values(ref_point, &mut v);
        let mut out = [0.0; 3];
        for (i, &n) in self.element(e).iter().enumerate() {
            for a in 0..self.dim {
                out[a] += v[i] * self.coords[n * self.dim + a];
            }
        }
        out
    }

    /// Jacobian of the element map at `ref_point`: `A = sum_i x_i (grad w_i)^T`.
    pub fn element_jacobian(&self, e: usize, ref_point: &[f64]) -> Mat {
        let nb = self.nodes_per_element();
        let d = self.dim;
        let mut v = vec![0.0; nb];
        let mut g = vec![0.0; nb * d];
        self.basis.eval(ref_point, &mut v, &mut g);
        jacobian_from_grads(d, &self.coords, self.element(e), &g)
    }

    /// Minimum of `det A` over all elements and quadrature points.
    pub fn min_det_jacobian(&self, quad: &QuadratureRule) -> f64 {
        let tab = Tabulation::new(&self.basis, quad);
        self.min_det_jacobian_tab(&self.coords, &tab)
    }

    pub(crate) fn min_det_jacobian_tab(&self, coords: &[f64], tab: &Tabulation) -> f64 {
        (0..self.num_elements())
            .into_par_iter()
            .map(|e| {
                let conn = self.element(e);
                (0..tab.num_points)
                    .map(|q| jacobian_from_grads(self.dim, coords, conn, tab.grads(q)).det())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// Per-element physical volume by quadrature.
    pub fn element_volumes(&self, quad: &QuadratureRule) -> Vec<f64> {
        let tab = Tabulation::new(&self.basis, quad);
        (0..self.num_elements())
            .map(|e| {
                let conn = self.element(e);
                (0..tab.num_points)
                    .map(|q| quad.weights[q] * jacobian_from_grads(self.dim, &self.coords, conn, tab.grads(q)).det())
                    .sum()
            })
            .collect()
    }

    pub fn volume(&self, quad: &QuadratureRule) -> f64 {
        self.element_volumes(quad).iter().sum()
    }

    /// Default quadrature: `degree + 2` Gauss-Legendre points per axis.
    pub fn default_quadrature(&self) -> QuadratureRule {
        gauss_legendre_rule(self.degree + 2, self.dim)
    }

    /// Node-to-element incidence.
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_nodes()];
        for e in 0..self.num_elements() {
            for &n in self.element(e) {
                out[n].push(e);
            }
        }
        out
    }

    /// Diagonal of the axis-aligned bounding box of all nodes.
    pub fn diameter(&self) -> f64 {
        let d = self.dim;
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in self.coords.chunks(d) {
            for a in 0..d {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (0..d).map(|a| (hi[a] - lo[a]).powi(2)).sum::<f64>().sqrt()
    }

    /// Shortest lattice edge incident to each node, over all elements.
    pub fn local_edge_lengths(&self) -> Vec<f64> {
        let d = self.dim;
        let p1 = self.degree + 1;
        let mut h = vec![f64::INFINITY; self.num_nodes()];
        for e in 0..self.num_elements() {
            let conn = self.element(e);
            for (i, &n) in conn.iter().enumerate() {
                for a in 0..d {
                    let stride = p1.pow(a as u32);
                    let ia = (i / stride) % p1;
                    if ia + 1 < p1 {
                        let m = conn[i + stride];
                        let len = dist(self.node(n), self.node(m));
                        h[n] = h[n].min(len);
                        h[m] = h[m].min(len);
                    }
                }
            }
        }
        h
    }

    /// Physical image of the element's node lattice (for sampling and export).
    pub fn element_lattice_points(&self, e: usize) -> Vec<[f64; 3]> {
        (0..self.nodes_per_element())
            .map(|i| {
                let n = self.element(e)[i];
                let mut p = [0.0; 3];
                p[..self.dim].copy_from_slice(self.node(n));
                p
            })
            .collect()
    }
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `A = sum_i x_i (grad w_i)^T` for one element, from tabulated gradients.
#[inline]
pub(crate) fn jacobian_from_grads(d: usize, coords: &[f64], conn: &[usize], grads: &[f64]) -> Mat {
    let mut a = Mat::zeros(d);
    for (i, &n) in conn.iter().enumerate() {
        let x = &coords[n * d..n * d + d];
        let g = &grads[i * d..i * d + d];
        for r in 0..d {
            for c in 0..d {
                a.add_to(r, c, x[r] * g[c]);
            }
        }
    }
    a
}

/// Basis values and reference gradients tabulated at quadrature points.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub num_points: usize,
    pub num_basis: usize,
    pub dim: usize,
    values: Vec<f64>,
    grads: Vec<f64>,
}

impl Tabulation {
    pub fn new(basis: &LagrangeBasis, quad: &QuadratureRule) -> Self {
        let nb = basis.num_nodes();
        let d = basis.dim();
        let nq = quad.num_points();
        let mut values = vec![0.0; nq * nb];
        let mut grads = vec![0.0; nq * nb * d];
        for q in 0..nq {
            basis.eval(
                quad.point(q),
                &mut values[q * nb..(q + 1) * nb],
                &mut grads[q * nb * d..(q + 1) * nb * d],
            );
        }
        Tabulation {
            num_points: nq,
            num_basis: nb,
            dim: d,
            values,
            grads,
        }
    }

    #[inline]
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.num_basis..(q + 1) * self.num_basis]
    }

    #[inline]
    pub fn grads(&self, q: usize) -> &[f64] {
        let s = self.num_basis * self.dim;
        &self.grads[q * s..(q + 1) * s]
    }
}
