//! Discrete Ciarlet–Nečas check: count how many deformed elements cover each
//! probe cell centre.

use crate::error::{Error, Result};
use crate::geometry::box_grid::BoxGrid;
use crate::geometry::fields::DeformationField;
use crate::geometry::mesh::{shape_gradients, shape_values, ReferenceMesh};
use crate::linalg::{Mat, Vector};

const NEWTON_ITERATIONS: usize = 40;
// Half-open membership in reference coordinates so that a probe point on a
// shared face is claimed by exactly one element.
const EDGE_TOL: f64 = 1e-10;

/// Reference coordinate ξ ∈ [0,1]^d of `z` in the element with corner values
/// `corners`, if the inverse Newton iteration converges.
fn invert_element(dim: usize, corners: &[Vector], z: &Vector) -> Option<Vector> {
    let mut xi = [0.5; 3];
    for k in dim..3 {
        xi[k] = 0.0;
    }
    let scale = corners
        .iter()
        .flat_map(|c| c[..dim].iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1.0);
    for _ in 0..NEWTON_ITERATIONS {
        let n = shape_values(dim, &xi);
        let g = shape_gradients(dim, &xi);
        let mut r = [0.0; 3];
        let mut jac = Mat::zeros(dim);
        for (a, c) in corners.iter().enumerate() {
            for i in 0..dim {
                r[i] += n[a] * c[i];
                for j in 0..dim {
                    jac.add_to(i, j, c[i] * g[a][j]);
                }
            }
        }
        for i in 0..dim {
            r[i] -= z[i];
        }
        let inv = jac.inverse()?;
        let step = inv.mul_vec(&r);
        let mut step_norm = 0.0f64;
        for k in 0..dim {
            xi[k] -= step[k];
            step_norm = step_norm.max(step[k].abs());
        }
        // Far outside the element there is no need to converge precisely.
        if xi[..dim].iter().any(|v| v.abs() > 10.0) {
            return None;
        }
        if step_norm < 1e-14 && crate::linalg::norm(&r) <= 1e-12 * scale {
            return Some(xi);
        }
    }
    None
}

fn inside(dim: usize, xi: &Vector) -> bool {
    xi[..dim].iter().all(|v| *v >= -EDGE_TOL && *v < 1.0 - EDGE_TOL)
}

/// Covering multiplicity of every probe cell centre.
pub fn coverage_counts(mesh: &ReferenceMesh, y: &DeformationField, probe: &BoxGrid) -> Result<Vec<u32>> {
    y.check_mesh(mesh)?;
    if probe.dim() != mesh.dim() {
        return Err(Error::Mismatch("probe grid and mesh dimensions differ".into()));
    }
    probe.check_contains(y)?;
    let dim = mesh.dim();
    let origin = probe.origin();
    let h = probe.cell_size();
    let cells = probe.cells();
    let mut counts = vec![0u32; probe.n_cells()];
    let mut corners = [[0.0; 3]; 8];
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for (a, &node) in nodes.iter().enumerate() {
            corners[a] = y.node(node);
        }
        let corners = &corners[..nodes.len()];
        for k in 0..dim {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for c in corners {
                mn = mn.min(c[k]);
                mx = mx.max(c[k]);
            }
            // Cell centres within [mn, mx].
            let first = ((mn - origin[k]) / h[k] - 0.5).ceil().max(0.0) as usize;
            let last = ((mx - origin[k]) / h[k] - 0.5).floor();
            if last < first as f64 {
                hi[0] = 0;
                lo[0] = 1;
                break;
            }
            lo[k] = first;
            hi[k] = (last as usize).min(cells[k] - 1);
        }
        if lo[0] > hi[0] {
            continue;
        }
        let (jz_lo, jz_hi) = if dim == 3 { (lo[2], hi[2]) } else { (0, 0) };
        for kz in jz_lo..=jz_hi {
            for ky in lo[1]..=hi[1] {
                for kx in lo[0]..=hi[0] {
                    let idx = kx + cells[0] * (ky + if dim == 3 { cells[1] * kz } else { 0 });
                    let z = probe.cell_center(idx);
                    if let Some(xi) = invert_element(dim, corners, &z) {
                        if inside(dim, &xi) {
                            counts[idx] += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(counts)
}

/// (volume counted with multiplicity − volume counted once) / |Ω| on the probe
/// grid. Zero means the deformation is discretely injective.
pub fn ciarlet_necas_residual(mesh: &ReferenceMesh, y: &DeformationField, probe: &BoxGrid) -> Result<f64> {
    let counts = coverage_counts(mesh, y, probe)?;
    let excess: u64 = counts.iter().map(|c| c.saturating_sub(1) as u64).sum();
    Ok(excess as f64 * probe.cell_volume() / mesh.volume())
}

/// Cubic probe grid with `cells` cells per axis enclosing the deformed nodes.
pub fn default_probe(mesh: &ReferenceMesh, y: &DeformationField, cells: usize) -> Result<BoxGrid> {
    let points: Vec<Vector> = (0..y.n_nodes()).map(|a| y.node(a)).collect();
    BoxGrid::enclosing(mesh.dim(), &points, 1.2, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::BoundarySpec;

    #[test]
    fn identity_and_shear_are_injective() {
        let mesh = ReferenceMesh::new(&[1.0, 1.0], &[8, 8], BoundarySpec::default()).unwrap();
        let probe = BoxGrid::around_mesh(&mesh, 2.0, 96).unwrap();
        let y = DeformationField::identity(&mesh);
        assert_eq!(ciarlet_necas_residual(&mesh, &y, &probe).unwrap(), 0.0);
        let shear = DeformationField::from_fn(&mesh, |x| [x[0] + 0.3 * x[1], x[1], 0.0]);
        assert_eq!(ciarlet_necas_residual(&mesh, &shear, &probe).unwrap(), 0.0);
        // Every interior centre is covered exactly once.
        let counts = coverage_counts(&mesh, &y, &probe).unwrap();
        let covered = counts.iter().filter(|c| **c == 1).count() as f64 * probe.cell_volume();
        assert!((covered - 1.0).abs() < 0.05);
    }

    #[test]
    fn probe_on_element_faces_is_counted_once() {
        // Probe cell centres coincide with element faces.
        let mesh = ReferenceMesh::new(&[1.0, 1.0], &[4, 4], BoundarySpec::default()).unwrap();
        let probe = BoxGrid::new(2, [-0.125, -0.125, 0.0], [0.25, 0.25, 0.0], &[8, 8]).unwrap();
        let y = DeformationField::identity(&mesh);
        let counts = coverage_counts(&mesh, &y, &probe).unwrap();
        assert!(counts.iter().all(|c| *c <= 1));
    }

    #[test]
    fn arc_wound_past_a_full_turn_overlaps() {
        // Strip of length 3π wound onto the unit circle: the last third lands
        // on the first, so about a third of the deformed area is doubly covered.
        let mesh = ReferenceMesh::new(&[3.0 * std::f64::consts::PI, 0.1], &[96, 2], BoundarySpec::default()).unwrap();
        let y = DeformationField::from_fn(&mesh, |x| {
            let r = 1.0 + x[1];
            [r * x[0].cos(), r * x[0].sin(), 0.0]
        });
        let probe = default_probe(&mesh, &y, 200).unwrap();
        let res = ciarlet_necas_residual(&mesh, &y, &probe).unwrap();
        let expected = (1.05 * 0.1 * std::f64::consts::PI) / mesh.volume();
        assert!((res - expected).abs() < 0.05 * expected, "{res} vs {expected}");
    }

    #[test]
    fn three_dimensional_identity() {
        let mesh = ReferenceMesh::new(&[1.0, 1.0, 1.0], &[3, 3, 3], BoundarySpec::default()).unwrap();
        let probe = BoxGrid::around_mesh(&mesh, 1.5, 20).unwrap();
        let y = DeformationField::identity(&mesh);
        assert_eq!(ciarlet_necas_residual(&mesh, &y, &probe).unwrap(), 0.0);
    }
}
