use crate::error::{Error, Result};
use crate::geometry::fields::{value_at, MagnetizationField};
use crate::geometry::mesh::ReferenceMesh;

/// H_c∫_Ω (√(|M − M_prev|² + ε²) − ε) by quadrature, with its nodal M-gradient.
pub fn smoothed_dissipation(
    mesh: &ReferenceMesh,
    m: &MagnetizationField,
    m_prev: &MagnetizationField,
    h_c: f64,
    eps: f64,
) -> Result<(f64, Vec<f64>)> {
    m.check_mesh(mesh)?;
    m_prev.check_mesh(mesh)?;
    if !(eps > 0.0) {
        return Err(Error::Invalid("dissipation smoothing must be positive".into()));
    }
    let dim = mesh.dim();
    let quad = mesh.quadrature();
    let mut value = 0.0;
    let mut grad = vec![0.0; m.values().len()];
    if h_c == 0.0 {
        return Ok((value, grad));
    }
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        for (q, &w) in quad.weights.iter().enumerate() {
            let a = value_at(mesh, m.values(), e, q);
            let b = value_at(mesh, m_prev.values(), e, q);
            let d = crate::linalg::sub(&a, &b);
            let root = (crate::linalg::dot(&d, &d) + eps * eps).sqrt();
            value += w * h_c * (root - eps);
            let coef = w * h_c / root;
            for (k, &node) in nodes.iter().enumerate() {
                let n = quad.shape[q][k];
                for i in 0..dim {
                    grad[node * dim + i] += coef * n * d[i];
                }
            }
        }
    }
    Ok((value, grad))
}
