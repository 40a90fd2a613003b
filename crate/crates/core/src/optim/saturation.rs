use crate::error::{Error, Result};
use crate::geometry::fields::MagnetizationField;

/// Node-wise M/|M|.
pub fn project_saturation(m: &MagnetizationField) -> Result<MagnetizationField> {
    let dim = m.dim();
    let mut out = m.clone();
    for (a, v) in out.values_mut().chunks_exact_mut(dim).enumerate() {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::DegenerateMagnetization { node: a });
        }
        v.iter_mut().for_each(|x| *x /= n);
    }
    Ok(out)
}

/// Retraction onto the product of spheres: normalize(M + α d).
pub fn retract(m: &MagnetizationField, direction: &[f64], alpha: f64) -> Result<MagnetizationField> {
    let mut moved = m.clone();
    for (v, d) in moved.values_mut().iter_mut().zip(direction) {
        *v += alpha * d;
    }
    project_saturation(&moved)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_and_is_idempotent() {
        let m = MagnetizationField::from_values(2, vec![3.0, 4.0, 1.0, 0.0]);
        let p = project_saturation(&m).unwrap();
        assert_eq!(p.values(), &[0.6, 0.8, 1.0, 0.0]);
        assert_eq!(project_saturation(&p).unwrap(), p);
        let zero = MagnetizationField::from_values(2, vec![1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(project_saturation(&zero), Err(Error::DegenerateMagnetization { node: 1 })));
    }
}
