use crate::error::{Error, Result};
use crate::geometry::fields::{gradient_at, DeformationField};
use crate::geometry::mesh::ReferenceMesh;

/// κ∫_Ω (det∇y − 1)² and its nodal gradient, using ∂(det F)/∂F = cof F.
pub fn incompressibility_penalty(
    mesh: &ReferenceMesh,
    y: &DeformationField,
    kappa: f64,
    det_floor: f64,
) -> Result<(f64, Vec<f64>)> {
    y.check_mesh(mesh)?;
    let dim = mesh.dim();
    let quad = mesh.quadrature();
    let mut value = 0.0;
    let mut grad = vec![0.0; y.values().len()];
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        for (q, &w) in quad.weights.iter().enumerate() {
            let f = gradient_at(mesh, y.values(), e, q);
            let det = f.det();
            if !(det > det_floor) {
                return Err(Error::DegenerateDeformation {
                    min_det: det,
                    element: e,
                    point: q,
                });
            }
            value += w * kappa * (det - 1.0).powi(2);
            let p = f.cofactor().scale(2.0 * kappa * (det - 1.0) * w);
            for (a, &node) in nodes.iter().enumerate() {
                let ga = &quad.grads[q][a];
                for i in 0..dim {
                    grad[node * dim + i] += (0..dim).map(|j| p.get(i, j) * ga[j]).sum::<f64>();
                }
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::BoundarySpec;
    use crate::linalg::Mat;

    fn mesh() -> ReferenceMesh {
        ReferenceMesh::new(&[1.0, 1.0], &[4, 4], BoundarySpec::default()).unwrap()
    }

    #[test]
    fn volume_preserving_maps_cost_nothing() {
        let m = mesh();
        let id = DeformationField::identity(&m);
        assert!(incompressibility_penalty(&m, &id, 10.0, 0.1).unwrap().0 < 1e-28);
        let shear = DeformationField::affine(&m, &Mat::from_rows(&[&[1.0, 0.3], &[0.0, 1.0]]), &[0.0; 3]);
        assert!(incompressibility_penalty(&m, &shear, 10.0, 0.1).unwrap().0 < 1e-28);
    }

    #[test]
    fn uniform_dilation() {
        let m = mesh();
        let s: f64 = 1.1;
        let y = DeformationField::affine(&m, &Mat::identity(2).scale(s), &[0.0; 3]);
        let (v, _) = incompressibility_penalty(&m, &y, 3.0, 0.1).unwrap();
        assert!((v - 3.0 * (s * s - 1.0).powi(2)).abs() < 1e-13);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = mesh();
        let y = DeformationField::from_fn(&m, |x| [x[0] * (1.0 + 0.1 * x[1]), x[1] + 0.05 * x[0] * x[0], 0.0]);
        let (_, g) = incompressibility_penalty(&m, &y, 2.0, 0.1).unwrap();
        let h = 1e-6;
        for k in 0..g.len() {
            let mut p = y.clone();
            p.values_mut()[k] += h;
            let mut n = y.clone();
            n.values_mut()[k] -= h;
            let fd = (incompressibility_penalty(&m, &p, 2.0, 0.1).unwrap().0
                - incompressibility_penalty(&m, &n, 2.0, 0.1).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3));
        }
    }
}
