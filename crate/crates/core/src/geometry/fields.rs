use crate::error::{invalid, Error, Result};
use crate::geometry::mesh::ReferenceMesh;
use crate::linalg::{self, Mat, Vector};

/// Below this determinant a deformation gradient is treated as degenerate.
pub const DEFAULT_DET_FLOOR: f64 = 0.1;

/// Nodal values of the deformation y: Ω → ℝ^d.
#[derive(Clone, Debug, PartialEq)]
pub struct DeformationField {
    dim: usize,
    values: Vec<f64>,
}

/// Nodal values of the pulled-back magnetization M = m∘y.
#[derive(Clone, Debug, PartialEq)]
pub struct MagnetizationField {
    dim: usize,
    values: Vec<f64>,
}

/// A magnetoelastic state q = (y, M).
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub y: DeformationField,
    pub m: MagnetizationField,
}

macro_rules! nodal_common {
    ($ty:ident) => {
        impl $ty {
            pub fn from_values(dim: usize, values: Vec<f64>) -> Self {
                debug_assert_eq!(values.len() % dim, 0);
                Self { dim, values }
            }

            pub fn from_fn(mesh: &ReferenceMesh, f: impl Fn(&Vector) -> Vector) -> Self {
                let dim = mesh.dim();
                let mut values = Vec::with_capacity(mesh.n_nodes() * dim);
                for x in mesh.nodes() {
                    values.extend_from_slice(&f(x)[..dim]);
                }
                Self { dim, values }
            }

            #[inline]
            pub fn dim(&self) -> usize {
                self.dim
            }

            #[inline]
            pub fn n_nodes(&self) -> usize {
                self.values.len() / self.dim
            }

            #[inline]
            pub fn node(&self, a: usize) -> Vector {
                linalg::load(&self.values[a * self.dim..], self.dim)
            }

            pub fn set_node(&mut self, a: usize, v: &Vector) {
                let d = self.dim;
                self.values[a * d..(a + 1) * d].copy_from_slice(&v[..d]);
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.values
            }

            pub fn check_mesh(&self, mesh: &ReferenceMesh) -> Result<()> {
                if self.dim != mesh.dim() || self.n_nodes() != mesh.n_nodes() {
                    return Err(Error::Mismatch(format!(
                        "{} has {} nodes in {}D, mesh has {} nodes in {}D",
                        stringify!($ty),
                        self.n_nodes(),
                        self.dim,
                        mesh.n_nodes(),
                        mesh.dim()
                    )));
                }
                Ok(())
            }
        }
    };
}

nodal_common!(DeformationField);
nodal_common!(MagnetizationField);

impl DeformationField {
    pub fn identity(mesh: &ReferenceMesh) -> Self {
        Self::from_fn(mesh, |x| *x)
    }

    /// y(x) = A x + b.
    pub fn affine(mesh: &ReferenceMesh, a: &Mat, b: &Vector) -> Self {
        Self::from_fn(mesh, |x| {
            let mut v = a.mul_vec(x);
            linalg::axpy(1.0, b, &mut v);
            v
        })
    }
}

impl MagnetizationField {
    /// Uniform field along `direction` (normalized).
    pub fn uniform(mesh: &ReferenceMesh, direction: &Vector) -> Result<Self> {
        let n = linalg::norm(direction);
        if n == 0.0 || !n.is_finite() {
            return Err(invalid("magnetization direction must be a nonzero vector"));
        }
        let u = linalg::scaled(1.0 / n, direction);
        Ok(Self::from_fn(mesh, |_| u))
    }

    /// Largest node-wise deviation ||M(a)| − 1|.
    pub fn saturation_defect(&self) -> f64 {
        (0..self.n_nodes())
            .map(|a| (linalg::norm(&self.node(a)) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// max_a |M(a)|.
    pub fn max_norm(&self) -> f64 {
        (0..self.n_nodes())
            .map(|a| linalg::norm(&self.node(a)))
            .fold(0.0, f64::max)
    }

    pub fn negated(&self) -> Self {
        Self {
            dim: self.dim,
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

impl State {
    pub fn check_mesh(&self, mesh: &ReferenceMesh) -> Result<()> {
        self.y.check_mesh(mesh)?;
        self.m.check_mesh(mesh)
    }
}

/// Gradient of the multilinear interpolant of a nodal field at (element, point).
fn interpolant_gradient(mesh: &ReferenceMesh, values: &[f64], element: usize, point: usize) -> Mat {
    let dim = mesh.dim();
    let grads = &mesh.quadrature().grads[point];
    let mut f = Mat::zeros(dim);
    for (a, &node) in mesh.element_nodes(element).iter().enumerate() {
        let ga = &grads[a];
        for i in 0..dim {
            let yi = values[node * dim + i];
            for j in 0..dim {
                f.add_to(i, j, yi * ga[j]);
            }
        }
    }
    f
}

fn check_indices(mesh: &ReferenceMesh, element: usize, point: usize) -> Result<()> {
    if element >= mesh.n_elements() || point >= mesh.quadrature().points.len() {
        return Err(invalid(format!(
            "element {element} / quadrature point {point} out of range"
        )));
    }
    Ok(())
}

/// F = ∇y at a quadrature point.
pub fn deformation_gradient(
    mesh: &ReferenceMesh,
    y: &DeformationField,
    element: usize,
    point: usize,
) -> Result<Mat> {
    check_indices(mesh, element, point)?;
    Ok(interpolant_gradient(mesh, y.values(), element, point))
}

/// ∇M at a quadrature point.
pub fn magnetization_gradient(
    mesh: &ReferenceMesh,
    m: &MagnetizationField,
    element: usize,
    point: usize,
) -> Result<Mat> {
    check_indices(mesh, element, point)?;
    Ok(interpolant_gradient(mesh, m.values(), element, point))
}

/// Unchecked variant for the assembly loops.
#[inline]
pub(crate) fn gradient_at(mesh: &ReferenceMesh, values: &[f64], element: usize, point: usize) -> Mat {
    interpolant_gradient(mesh, values, element, point)
}

/// Interpolated nodal value at a quadrature point.
#[inline]
pub(crate) fn value_at(mesh: &ReferenceMesh, values: &[f64], element: usize, point: usize) -> Vector {
    let dim = mesh.dim();
    let shape = &mesh.quadrature().shape[point];
    let mut v = [0.0; 3];
    for (a, &node) in mesh.element_nodes(element).iter().enumerate() {
        for i in 0..dim {
            v[i] += shape[a] * values[node * dim + i];
        }
    }
    v
}

/// Deformed-configuration gradient G·F⁻¹ of a field whose reference gradient is G.
pub fn pullback_gradient(f: &Mat, g: &Mat, det_floor: f64) -> Result<Mat> {
    let det = f.det();
    if !(det > det_floor) {
        return Err(Error::DegenerateDeformation {
            min_det: det,
            element: usize::MAX,
            point: usize::MAX,
        });
    }
    let inv = f.cofactor().transpose().scale(1.0 / det);
    Ok(*g * inv)
}

/// Summary of det ∇y over all quadrature points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeterminantStats {
    pub min: f64,
    pub max: f64,
    /// max |det ∇y − 1|.
    pub incompressibility_residual: f64,
    pub argmin: (usize, usize),
}

pub fn determinant_stats(mesh: &ReferenceMesh, y: &DeformationField) -> DeterminantStats {
    let mut stats = DeterminantStats {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        incompressibility_residual: 0.0,
        argmin: (0, 0),
    };
    let n_q = mesh.quadrature().points.len();
    for e in 0..mesh.n_elements() {
        for q in 0..n_q {
            let det = gradient_at(mesh, y.values(), e, q).det();
            if det < stats.min {
                stats.min = det;
                stats.argmin = (e, q);
            }
            stats.max = stats.max.max(det);
            stats.incompressibility_residual = stats.incompressibility_residual.max((det - 1.0).abs());
        }
    }
    stats
}

/// Fails with the worst location when det ∇y ≤ `det_floor` anywhere.
pub fn check_det_floor(mesh: &ReferenceMesh, y: &DeformationField, det_floor: f64) -> Result<DeterminantStats> {
    let stats = determinant_stats(mesh, y);
    if !(stats.min > det_floor) {
        return Err(Error::DegenerateDeformation {
            min_det: stats.min,
            element: stats.argmin.0,
            point: stats.argmin.1,
        });
    }
    Ok(stats)
}

/// Mean det ∇y per element.
pub fn element_mean_det(mesh: &ReferenceMesh, y: &DeformationField) -> Vec<f64> {
    let n_q = mesh.quadrature().points.len();
    (0..mesh.n_elements())
        .map(|e| (0..n_q).map(|q| gradient_at(mesh, y.values(), e, q).det()).sum::<f64>() / n_q as f64)
        .collect()
}
