use crate::error::Result;
use crate::geometry::fields::{value_at, MagnetizationField};
use crate::geometry::mesh::ReferenceMesh;
use crate::linalg::{norm, sub};

/// ∫_Ω |M₁ − M₂| by quadrature of the interpolated fields.
pub fn l1_distance(mesh: &ReferenceMesh, m1: &MagnetizationField, m2: &MagnetizationField) -> Result<f64> {
    m1.check_mesh(mesh)?;
    m2.check_mesh(mesh)?;
    let quad = mesh.quadrature();
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        for (q, &w) in quad.weights.iter().enumerate() {
            let a = value_at(mesh, m1.values(), e, q);
            let b = value_at(mesh, m2.values(), e, q);
            total += w * norm(&sub(&a, &b));
        }
    }
    Ok(total)
}

/// 𝒟 = H_c∫_Ω |M₁ − M₂|.
pub fn dissipation(mesh: &ReferenceMesh, m1: &MagnetizationField, m2: &MagnetizationField, h_c: f64) -> Result<f64> {
    Ok(h_c * l1_distance(mesh, m1, m2)?)
}
