//! Small dense matrices and vectors of runtime dimension 2 or 3.
//!
//! Storage is always 3×3 (resp. 3) with unused entries kept at zero, which
//! keeps the per-quadrature-point kernels allocation free.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// A vector in ℝ^d, d ∈ {2, 3}, padded with zeros.
pub type Vector = [f64; 3];

pub fn dot(a: &Vector, b: &Vector) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vector) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &Vector, y: &mut Vector) {
    for k in 0..3 {
        y[k] += alpha * x[k];
    }
}

pub fn scaled(alpha: f64, x: &Vector) -> Vector {
    [alpha * x[0], alpha * x[1], alpha * x[2]]
}

pub fn sub(a: &Vector, b: &Vector) -> Vector {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Copies the first `dim` entries of a slice into a padded vector.
pub fn load(slice: &[f64], dim: usize) -> Vector {
    let mut v = [0.0; 3];
    v[..dim].copy_from_slice(&slice[..dim]);
    v
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    dim: usize,
    a: [[f64; 3]; 3],
}

impl Mat {
    pub fn zeros(dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        Self { dim, a: [[0.0; 3]; 3] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.a[i][i] = *v;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "non-square matrix");
            m.a[i][..dim].copy_from_slice(row);
        }
        m
    }

    pub fn outer(dim: usize, u: &Vector, v: &Vector) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i][j] = u[i] * v[j];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] += v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.a[j][i] = self.a[i][j];
            }
        }
        t
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.dim {
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    /// Cofactor matrix, cof F = (det F) F⁻ᵀ, computed without division.
    pub fn cofactor(&self) -> Self {
        let a = &self.a;
        let mut c = Self::zeros(self.dim);
        match self.dim {
            2 => {
                c.a[0][0] = a[1][1];
                c.a[0][1] = -a[1][0];
                c.a[1][0] = -a[0][1];
                c.a[1][1] = a[0][0];
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
                        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
                        c.a[i][j] = a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1];
                    }
                }
            }
        }
        c
    }

    /// Inverse via the cofactor formula; `None` for an exactly singular matrix.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(self.cofactor().transpose().scale(1.0 / det))
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.a[i][j] *= s;
            }
        }
        m
    }

    /// Frobenius inner product A : B.
    pub fn contract(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.a[i][j] * other.a[i][j];
            }
        }
        s
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.contract(self)
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn mul_vec(&self, v: &Vector) -> Vector {
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[i] += self.a[i][j] * v[j];
            }
        }
        out
    }

    /// Aᵀ v.
    pub fn tr_mul_vec(&self, v: &Vector) -> Vector {
        let mut out = [0.0; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                out[j] += self.a[i][j] * v[i];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max((self.a[i][j] - other.a[i][j]).abs());
            }
        }
        m
    }
}

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, rhs: Mat) -> Mat {
        debug_assert_eq!(self.dim, rhs.dim);
        let mut out = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for k in 0..self.dim {
                let aik = self.a[i][k];
                for j in 0..self.dim {
                    out.a[i][j] += aik * rhs.a[k][j];
                }
            }
        }
        out
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(mut self, rhs: Mat) -> Mat {
        self += rhs;
        self
    }
}

impl AddAssign for Mat {
    fn add_assign(&mut self, rhs: Mat) {
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.a[i][j] += rhs.a[i][j];
            }
        }
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(self, rhs: Mat) -> Mat {
        self + rhs.scale(-1.0)
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

/// Rotation about the third axis (2D rotation when `dim == 2`).
pub fn planar_rotation(dim: usize, angle: f64) -> Mat {
    let (s, c) = angle.sin_cos();
    let mut r = Mat::identity(dim);
    r.set(0, 0, c);
    r.set(0, 1, -s);
    r.set(1, 0, s);
    r.set(1, 1, c);
    r
}

/// Rotation by `angle` about the unit `axis` (Rodrigues); 3D only.
pub fn axis_rotation(axis: &Vector, angle: f64) -> Mat {
    let n = norm(axis);
    let k = scaled(1.0 / n, axis);
    let (s, c) = angle.sin_cos();
    let mut r = Mat::identity(3).scale(c);
    r += Mat::outer(3, &k, &k).scale(1.0 - c);
    let mut kx = Mat::zeros(3);
    kx.set(0, 1, -k[2]);
    kx.set(0, 2, k[1]);
    kx.set(1, 0, k[2]);
    kx.set(1, 2, -k[0]);
    kx.set(2, 0, -k[1]);
    kx.set(2, 1, k[0]);
    r + kx.scale(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cofactor_matches_det_inverse_transpose() {
        let f = Mat::from_rows(&[&[1.2, 0.3, -0.1], &[0.4, 0.9, 0.2], &[-0.3, 0.1, 1.1]]);
        let cof = f.cofactor();
        let expected = f.inverse().unwrap().transpose().scale(f.det());
        assert!(cof.max_abs_diff(&expected) < 1e-14);
        let g = Mat::from_rows(&[&[2.0, 1.0], &[0.5, 3.0]]);
        let expected = g.inverse().unwrap().transpose().scale(g.det());
        assert!(g.cofactor().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn rotations_are_orthogonal() {
        let r = axis_rotation(&[0.3, -1.0, 0.5], 0.7);
        assert!((r.transpose() * r).max_abs_diff(&Mat::identity(3)) < 1e-14);
        assert!((r.det() - 1.0).abs() < 1e-14);
        let q = planar_rotation(2, 2.1);
        assert!((q.transpose() * q).max_abs_diff(&Mat::identity(2)) < 1e-15);
    }
}
