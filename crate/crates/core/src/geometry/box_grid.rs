use crate::error::{invalid, Error, Result};
use crate::geometry::fields::DeformationField;
use crate::geometry::mesh::ReferenceMesh;
use crate::linalg::Vector;

/// Axis-aligned Cartesian box discretized into cells, used both for the
/// magnetostatic potential and as a probe grid for injectivity checks.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxGrid {
    dim: usize,
    origin: Vector,
    cell_size: Vector,
    cells: [usize; 3],
}

impl BoxGrid {
    pub fn new(dim: usize, origin: Vector, cell_size: Vector, cells: &[usize]) -> Result<Self> {
        if cells.len() != dim || cells.iter().any(|c| *c < 2) {
            return Err(invalid("box needs at least two cells per axis"));
        }
        if cell_size[..dim].iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(invalid("box cell size must be positive"));
        }
        let mut c = [1usize; 3];
        c[..dim].copy_from_slice(cells);
        Ok(Self {
            dim,
            origin,
            cell_size,
            cells: c,
        })
    }

    /// Cubic box centred on the reference body with side `padding × diameter`
    /// and `cells` cells per axis.
    pub fn around_mesh(mesh: &ReferenceMesh, padding: f64, cells: usize) -> Result<Self> {
        if !(padding >= 1.0) {
            return Err(invalid("box padding must be at least 1"));
        }
        let dim = mesh.dim();
        let side = padding * mesh.diameter();
        let mut origin = [0.0; 3];
        let mut size = [0.0; 3];
        for k in 0..dim {
            origin[k] = 0.5 * mesh.extents()[k] - 0.5 * side;
            size[k] = side / cells as f64;
        }
        Self::new(dim, origin, size, &vec![cells; dim])
    }

    /// Cubic box centred on the bounding box of a point cloud, with side
    /// `padding ×` its diagonal.
    pub fn enclosing(dim: usize, points: &[Vector], padding: f64, cells: usize) -> Result<Self> {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let diag = (0..dim).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt();
        let side = padding * diag;
        let mut origin = [0.0; 3];
        let mut size = [0.0; 3];
        for k in 0..dim {
            origin[k] = 0.5 * (lo[k] + hi[k]) - 0.5 * side;
            size[k] = side / cells as f64;
        }
        Self::new(dim, origin, size, &vec![cells; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn origin(&self) -> &Vector {
        &self.origin
    }

    pub fn cell_size(&self) -> &Vector {
        &self.cell_size
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn n_cells(&self) -> usize {
        self.cells[..self.dim].iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_size[..self.dim].iter().product()
    }

    pub fn upper(&self) -> Vector {
        let mut u = self.origin;
        for k in 0..self.dim {
            u[k] += self.cells[k] as f64 * self.cell_size[k];
        }
        u
    }

    pub fn center(&self) -> Vector {
        let mut c = self.origin;
        for k in 0..self.dim {
            c[k] += 0.5 * self.cells[k] as f64 * self.cell_size[k];
        }
        c
    }

    /// Same grid shifted by whole cells.
    pub fn translated_cells(&self, shift: &[i64]) -> Self {
        let mut b = self.clone();
        for k in 0..self.dim {
            b.origin[k] += shift[k] as f64 * self.cell_size[k];
        }
        b
    }

    /// Same grid shifted by an arbitrary vector.
    pub fn translated(&self, shift: &Vector) -> Self {
        let mut b = self.clone();
        for k in 0..self.dim {
            b.origin[k] += shift[k];
        }
        b
    }

    pub fn contains(&self, p: &Vector) -> bool {
        let upper = self.upper();
        (0..self.dim).all(|k| p[k] > self.origin[k] && p[k] < upper[k])
    }

    /// Linear index of the cell containing `p`, if inside.
    #[inline]
    pub fn cell_index(&self, p: &Vector) -> Option<usize> {
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.dim {
            let s = (p[k] - self.origin[k]) / self.cell_size[k];
            if !(s >= 0.0) {
                return None;
            }
            let i = s as usize;
            if i >= self.cells[k] {
                return None;
            }
            idx += i * stride;
            stride *= self.cells[k];
        }
        Some(idx)
    }

    pub fn cell_multi_index(&self, idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut rem = idx;
        for k in 0..self.dim {
            out[k] = rem % self.cells[k];
            rem /= self.cells[k];
        }
        out
    }

    pub fn cell_center(&self, idx: usize) -> Vector {
        let mi = self.cell_multi_index(idx);
        let mut c = [0.0; 3];
        for k in 0..self.dim {
            c[k] = self.origin[k] + (mi[k] as f64 + 0.5) * self.cell_size[k];
        }
        c
    }

    /// Node counts per axis (cells + 1).
    pub fn node_counts(&self) -> [usize; 3] {
        let mut n = [1; 3];
        for k in 0..self.dim {
            n[k] = self.cells[k] + 1;
        }
        n
    }

    pub fn n_nodes(&self) -> usize {
        self.node_counts()[..self.dim].iter().product()
    }

    pub fn node_position(&self, idx: usize) -> Vector {
        let counts = self.node_counts();
        let mut rem = idx;
        let mut p = [0.0; 3];
        for k in 0..self.dim {
            let i = rem % counts[k];
            rem /= counts[k];
            p[k] = self.origin[k] + i as f64 * self.cell_size[k];
        }
        p
    }

    pub fn is_boundary_node(&self, idx: usize) -> bool {
        let counts = self.node_counts();
        let mut rem = idx;
        for k in 0..self.dim {
            let i = rem % counts[k];
            rem /= counts[k];
            if i == 0 || i == counts[k] - 1 {
                return true;
            }
        }
        false
    }

    /// Fails unless every deformed node lies strictly inside the box; for
    /// multilinear elements this bounds the whole deformed image.
    pub fn check_contains(&self, y: &DeformationField) -> Result<()> {
        for a in 0..y.n_nodes() {
            let p = y.node(a);
            if !self.contains(&p) {
                return Err(Error::BoxOverflow {
                    point: p[..self.dim].to_vec(),
                    lower: self.origin[..self.dim].to_vec(),
                    upper: self.upper()[..self.dim].to_vec(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::BoundarySpec;

    #[test]
    fn box_around_unit_square() {
        let mesh = ReferenceMesh::new(&[1.0, 1.0], &[4, 4], BoundarySpec::default()).unwrap();
        let b = BoxGrid::around_mesh(&mesh, 2.0, 64).unwrap();
        assert_eq!(b.n_cells(), 64 * 64);
        let c = b.center();
        assert!((c[0] - 0.5).abs() < 1e-15 && (c[1] - 0.5).abs() < 1e-15);
        assert!(b.check_contains(&DeformationField::identity(&mesh)).is_ok());
        let far = DeformationField::from_fn(&mesh, |x| [x[0] + 5.0, x[1], 0.0]);
        assert!(matches!(b.check_contains(&far), Err(Error::BoxOverflow { .. })));
    }

    #[test]
    fn cell_lookup_round_trips() {
        let b = BoxGrid::new(2, [-1.0, -2.0, 0.0], [0.5, 0.25, 0.0], &[4, 16]).unwrap();
        for idx in 0..b.n_cells() {
            assert_eq!(b.cell_index(&b.cell_center(idx)), Some(idx));
        }
        assert_eq!(b.cell_index(&[5.0, 0.0, 0.0]), None);
        assert_eq!(b.n_nodes(), 5 * 17);
        assert!(b.is_boundary_node(0));
    }
}
