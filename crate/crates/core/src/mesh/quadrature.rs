//! Tensor-product Gauss-Legendre quadrature on `[0,1]^d`.

use serde::{Deserialize, Serialize};

/// Quadrature points in reference coordinates with weights summing to 1.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct QuadratureRule {
    pub dim: usize,
    pub points_per_dim: usize,
    /// Flattened `num_points * dim` reference coordinates.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn num_points(&self) -> usize {
        self.weights.len()
    }

    pub fn point(&self, q: usize) -> &[f64] {
        &self.points[q * self.dim..(q + 1) * self.dim]
    }
}

/// Gauss-Legendre points and weights on `[0,1]`.
pub fn gauss_legendre_1d(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut pts = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
            x = 0.0;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the root in (0,1]; store symmetric pair on [0,1].
        pts[i] = 0.5 * (1.0 - x);
        pts[n - 1 - i] = 0.5 * (1.0 + x);
        wts[i] = 0.5 * w;
        wts[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        pts[n / 2] = 0.5;
    }
    (pts, wts)
}

/// Tensor-product rule with `points_per_dim` points along each axis, exact for
/// polynomials of degree `2 * points_per_dim - 1` in each variable.
pub fn gauss_legendre_rule(points_per_dim: usize, dim: usize) -> QuadratureRule {
    let (p1, w1) = gauss_legendre_1d(points_per_dim);
    let nq = points_per_dim.pow(dim as u32);
    let mut points = Vec::with_capacity(nq * dim);
    let mut weights = Vec::with_capacity(nq);
    for q in 0..nq {
        let mut rem = q;
        let mut w = 1.0;
        for _ in 0..dim {
            let i = rem % points_per_dim;
            rem /= points_per_dim;
            points.push(p1[i]);
            w *= w1[i];
        }
        weights.push(w);
    }
    QuadratureRule {
        dim,
        points_per_dim,
        points,
        weights,
    }
}
