//! Small dense matrices for 2D and 3D Jacobians.
//!
//! Storage is a fixed 3x3 array; only the leading `dim x dim` block is
//! meaningful and the rest is kept at zero.

use std::ops::{Add, Mul, Sub};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mat {
    dim: usize,
    m: [[f64; 3]; 3],
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        Mat {
            dim,
            m: [[0.0; 3]; 3],
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.m[i][i] = c;
        }
        out
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut out = Self::zeros(diag.len());
        for (i, v) in diag.iter().enumerate() {
            out.m[i][i] = *v;
        }
        out
    }

    /// Builds a matrix from row-major entries; `rows.len()` must be 4 or 9.
    pub fn from_rows(dim: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), dim * dim);
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                out.m[i][j] = rows[i * dim + j];
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] += v;
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        match self.dim {
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    }

    /// Inverse via the adjugate. Returns `None` for an exactly singular matrix.
    pub fn inverse(&self) -> Option<Mat> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let m = &self.m;
        let mut out = Mat::zeros(self.dim);
        let inv = 1.0 / det;
        match self.dim {
            2 => {
                out.m[0][0] = m[1][1] * inv;
                out.m[0][1] = -m[0][1] * inv;
                out.m[1][0] = -m[1][0] * inv;
                out.m[1][1] = m[0][0] * inv;
            }
            _ => {
                out.m[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv;
                out.m[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv;
                out.m[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv;
                out.m[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv;
                out.m[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv;
                out.m[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv;
                out.m[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv;
                out.m[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv;
                out.m[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv;
            }
        }
        Some(out)
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    /// Squared Frobenius norm.
    pub fn frob2(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.m[i][j] * self.m[i][j];
            }
        }
        s
    }

    pub fn scale(&self, c: f64) -> Mat {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for v in row.iter_mut() {
                *v *= c;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s = s.max(self.m[i][j].abs());
            }
        }
        s
    }

    pub fn mul_vec(&self, v: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i] += self.m[i][j] * v[j];
            }
        }
        out
    }
}

impl Mul for Mat {
    type Output = Mat;

    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for k in 0..self.dim {
                let a = self.m[i][k];
                for j in 0..self.dim {
                    out.m[i][j] += a * rhs.m[k][j];
                }
            }
        }
        out
    }
}

impl Add for Mat {
    type Output = Mat;

    fn add(self, rhs: Mat) -> Mat {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] += rhs.m[i][j];
            }
        }
        out
    }
}

impl Sub for Mat {
    type Output = Mat;

    fn sub(self, rhs: Mat) -> Mat {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] -= rhs.m[i][j];
            }
        }
        out
    }
}

/// Rotation by `angle` in 2D, or about a unit `axis` in 3D (Rodrigues).
pub fn rotation(dim: usize, angle: f64, axis: [f64; 3]) -> Mat {
    let (s, c) = angle.sin_cos();
    if dim == 2 {
        return Mat::from_rows(2, &[c, -s, s, c]);
    }
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let t = 1.0 - c;
    Mat::from_rows(
        3,
        &[
            c + x * x * t,
            x * y * t - z * s,
            x * z * t + y * s,
            y * x * t + z * s,
            c + y * y * t,
            y * z * t - x * s,
            z * x * t - y * s,
            z * y * t + x * s,
            c + z * z * t,
        ],
    )
}
