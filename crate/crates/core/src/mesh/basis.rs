//! Tensor-product Lagrange basis on the unit reference cube `[0,1]^d`.
//!
//! Interpolation nodes are the Gauss-Lobatto points of the requested degree.
//! Local node numbering is lexicographic with the first axis fastest: the
//! node with 1D indices `(i, j, k)` has local index `i + (p+1) j + (p+1)^2 k`
//! for degree `p`.

use crate::error::{Result, TmopError};

/// Legendre polynomial `P_n(x)` and `P_{n-1}(x)` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let (mut p_prev, mut p) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Gauss-Lobatto points of a degree-`degree` interpolant, mapped to `[0,1]`.
/// The returned set is exactly symmetric about 1/2 and contains 0 and 1.
pub fn gauss_lobatto_points(degree: usize) -> Vec<f64> {
    assert!(degree >= 1);
    let n = degree;
    let mut pts = vec![0.0; n + 1];
    for i in 0..=n / 2 {
        // Newton on (1-x^2) P_n'(x), started from Chebyshev-Lobatto points.
        let mut x = -(std::f64::consts::PI * i as f64 / n as f64).cos();
        if i > 0 {
            for _ in 0..100 {
                let (pn, pn1) = legendre_pair(n, x);
                let dx = (x * pn - pn1) / ((n + 1) as f64 * pn);
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
        }
        let t = 0.5 * (x + 1.0);
        pts[i] = t;
        pts[n - i] = 1.0 - t;
    }
    pts[0] = 0.0;
    pts[n] = 1.0;
    if n.is_multiple_of(2) {
        pts[n / 2] = 0.5;
    }
    pts
}

/// Values and first derivatives of the 1D Lagrange polynomials on `nodes`.
fn lagrange_1d(nodes: &[f64], t: f64, values: &mut [f64], derivs: &mut [f64]) {
    let n = nodes.len();
    for j in 0..n {
        let mut denom = 1.0;
        let mut val = 1.0;
        let mut der = 0.0;
        for m in 0..n {
            if m == j {
                continue;
            }
            denom *= nodes[j] - nodes[m];
            // Product rule accumulated alongside the value.
            der = der * (t - nodes[m]) + val;
            val *= t - nodes[m];
        }
        values[j] = val / denom;
        derivs[j] = der / denom;
    }
}

/// Tensor-product Lagrange basis for a fixed degree and dimension.
#[derive(Clone, Debug)]
pub struct LagrangeBasis {
    degree: usize,
    dim: usize,
    nodes: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(degree: usize, dim: usize) -> Result<Self> {
        if degree < 1 {
            return Err(TmopError::invalid(format!("basis degree must be >= 1, got {degree}")));
        }
        if dim != 2 && dim != 3 {
            return Err(TmopError::invalid(format!("dimension must be 2 or 3, got {dim}")));
        }
        Ok(LagrangeBasis {
            degree,
            dim,
            nodes: gauss_lobatto_points(degree),
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_nodes(&self) -> usize {
        (self.degree + 1).pow(self.dim as u32)
    }

    /// 1D interpolation nodes in `[0,1]`.
    pub fn nodes_1d(&self) -> &[f64] {
        &self.nodes
    }

    /// Reference coordinates of local node `i`.
    pub fn node_ref_point(&self, i: usize) -> [f64; 3] {
        let p1 = self.degree + 1;
        let mut out = [0.0; 3];
        let mut rem = i;
        for a in 0..self.dim {
            out[a] = self.nodes[rem % p1];
            rem /= p1;
        }
        out
    }

    /// Evaluates all basis functions at `ref_point`.
    ///
    /// `values` has length `num_nodes()`, `grads` has length
    /// `num_nodes() * dim` with the gradient of function `i` at
    /// `grads[i*dim..(i+1)*dim]`.
    pub fn eval(&self, ref_point: &[f64], values: &mut [f64], grads: &mut [f64]) {
        let p1 = self.degree + 1;
        let d = self.dim;
        let mut v1 = [[0.0; 16]; 3];
        let mut d1 = [[0.0; 16]; 3];
        assert!(p1 <= 16, "degree too high");
        for a in 0..d {
            lagrange_1d(&self.nodes, ref_point[a], &mut v1[a][..p1], &mut d1[a][..p1]);
        }
        let nb = self.num_nodes();
        for i in 0..nb {
            let mut idx = [0usize; 3];
            let mut rem = i;
            for a in 0..d {
                idx[a] = rem % p1;
                rem /= p1;
            }
            let mut val = 1.0;
            for a in 0..d {
                val *= v1[a][idx[a]];
            }
            values[i] = val;
            for a in 0..d {
                let mut g = 1.0;
                for b in 0..d {
                    g *= if a == b { d1[b][idx[b]] } else { v1[b][idx[b]] };
                }
                grads[i * d + a] = g;
            }
        }
    }

    /// Values only.
    pub fn eval_values(&self, ref_point: &[f64], values: &mut [f64]) {
        let mut grads = vec![0.0; self.num_nodes() * self.dim];
        self.eval(ref_point, values, &mut grads);
    }
}

/// Values and reference gradients of the degree-`degree` basis at `ref_point`.
pub fn shape_functions(degree: usize, dim: usize, ref_point: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let basis = LagrangeBasis::new(degree, dim)?;
    if ref_point.len() < dim {
        return Err(TmopError::invalid("reference point has too few coordinates"));
    }
    let mut values = vec![0.0; basis.num_nodes()];
    let mut grads = vec![0.0; basis.num_nodes() * dim];
    basis.eval(ref_point, &mut values, &mut grads);
    Ok((values, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lobatto_points_known_values() {
        let p3 = gauss_lobatto_points(3);
        let a = 0.5 * (1.0 - 1.0 / 5f64.sqrt());
        assert!((p3[1] - a).abs() < 1e-15);
        assert!((p3[2] - (1.0 - a)).abs() < 1e-15);
        let p4 = gauss_lobatto_points(4);
        let b = 0.5 * (1.0 - (3.0f64 / 7.0).sqrt());
        assert!((p4[1] - b).abs() < 1e-15);
        assert_eq!(p4[2], 0.5);
    }

    #[test]
    fn corner_interpolation_q1() {
        let (v, _) = shape_functions(1, 2, &[0.0, 0.0]).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn q2_center_node() {
        let (v, _) = shape_functions(2, 2, &[0.5, 0.5]).unwrap();
        for (i, val) in v.iter().enumerate() {
            let expected = if i == 4 { 1.0 } else { 0.0 };
            assert!((val - expected).abs() < 1e-15, "node {i}: {val}");
        }
    }

    #[test]
    fn nodal_property_all_nodes() {
        let basis = LagrangeBasis::new(3, 3).unwrap();
        let nb = basis.num_nodes();
        let mut v = vec![0.0; nb];
        for i in 0..nb {
            basis.eval_values(&basis.node_ref_point(i), &mut v);
            for (j, val) in v.iter().enumerate() {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((val - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(shape_functions(0, 2, &[0.0, 0.0]).is_err());
        assert!(shape_functions(2, 1, &[0.0]).is_err());
        assert!(shape_functions(2, 4, &[0.0; 4]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let basis = LagrangeBasis::new(4, 2).unwrap();
        let nb = basis.num_nodes();
        let p = [0.31, 0.77];
        let (mut v, mut g) = (vec![0.0; nb], vec![0.0; nb * 2]);
        basis.eval(&p, &mut v, &mut g);
        let h = 1e-6;
        let (mut vp, mut vm) = (vec![0.0; nb], vec![0.0; nb]);
        for a in 0..2 {
            let mut pp = p;
            let mut pm = p;
            pp[a] += h;
            pm[a] -= h;
            basis.eval_values(&pp, &mut vp);
            basis.eval_values(&pm, &mut vm);
            for i in 0..nb {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - g[i * 2 + a]).abs() < 1e-7);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn partition_of_unity(degree in 1usize..=4, dim in 2usize..=3,
                              x in 0.0f64..=1.0, y in 0.0f64..=1.0, z in 0.0f64..=1.0) {
            let (v, g) = shape_functions(degree, dim, &[x, y, z]).unwrap();
            let sum: f64 = v.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-13);
            for a in 0..dim {
                let gs: f64 = (0..v.len()).map(|i| g[i * dim + a]).sum();
                prop_assert!(gs.abs() < 1e-13, "gradient sum {gs}");
            }
        }
    }
}
