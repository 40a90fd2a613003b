use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::material::params::MaterialParams;

/// Value and first derivatives of W at one point.
#[derive(Clone, Copy, Debug)]
pub struct DensityValue {
    pub w: f64,
    pub dw_df: Mat,
    /// Derivative with respect to m, treating m as a free vector.
    pub dw_dm: Vector,
}

/// S : ∂(cof F)/∂F, i.e. the F-gradient of F ↦ S : cof F at fixed S.
/// Polynomial in F, so it needs no inverse.
pub fn cofactor_adjoint(f: &Mat, s: &Mat) -> Mat {
    let dim = f.dim();
    let mut g = Mat::zeros(dim);
    if dim == 2 {
        // cof F = [[F11, −F10], [−F01, F00]]
        g.set(1, 1, s.get(0, 0));
        g.set(1, 0, -s.get(0, 1));
        g.set(0, 1, -s.get(1, 0));
        g.set(0, 0, s.get(1, 1));
    } else {
        // C_kl = F_{k+1,l+1} F_{k+2,l+2} − F_{k+1,l+2} F_{k+2,l+1}, indices mod 3.
        for k in 0..3 {
            let (k1, k2) = ((k + 1) % 3, (k + 2) % 3);
            for l in 0..3 {
                let (l1, l2) = ((l + 1) % 3, (l + 2) % 3);
                let skl = s.get(k, l);
                g.add_to(k1, l1, skl * f.get(k2, l2));
                g.add_to(k2, l2, skl * f.get(k1, l1));
                g.add_to(k1, l2, -skl * f.get(k2, l1));
                g.add_to(k2, l1, -skl * f.get(k1, l2));
            }
        }
    }
    g
}

/// W and its derivatives with no admissibility checks; m need not be unit.
pub fn evaluate(params: &MaterialParams, f: &Mat, m: &Vector) -> DensityValue {
    let dim = f.dim();
    let c = f.cofactor();
    let fn2 = f.frobenius_sq();
    let fnorm_p = fn2.powf(0.5 * params.p);
    let ftm = f.tr_mul_vec(m);
    let ctm = c.tr_mul_vec(m);
    let w = params.mu * fnorm_p
        + params.gamma * c.frobenius_sq()
        + params.beta1 * linalg::dot(&ftm, &ftm)
        + params.beta2 * linalg::dot(&ctm, &ctm)
        - params.w0(dim);

    let mut dw_df = if fn2 > 0.0 {
        f.scale(params.mu * params.p * fnorm_p / fn2)
    } else {
        Mat::zeros(dim)
    };
    dw_df += Mat::outer(dim, m, &ftm).scale(2.0 * params.beta1);
    let s = c.scale(2.0 * params.gamma) + Mat::outer(dim, m, &ctm).scale(2.0 * params.beta2);
    dw_df += cofactor_adjoint(f, &s);

    let mut dw_dm = linalg::scaled(2.0 * params.beta1, &f.mul_vec(&ftm));
    linalg::axpy(2.0 * params.beta2, &c.mul_vec(&ctm), &mut dw_dm);
    DensityValue { w, dw_df, dw_dm }
}

/// Elastic energy density W(F, m) and ∂W/∂F for det F > `det_floor`, |m| = 1.
pub fn elastic_density(params: &MaterialParams, f: &Mat, m: &Vector, det_floor: f64) -> Result<(f64, Mat)> {
    let det = f.det();
    if !(det > det_floor) {
        return Err(Error::DegenerateDeformation {
            min_det: det,
            element: usize::MAX,
            point: usize::MAX,
        });
    }
    let n = linalg::norm(m);
    if !((n - 1.0).abs() <= 1e-8) {
        return Err(Error::Invalid(format!("elastic_density needs a unit m, got |m| = {n}")));
    }
    let v = evaluate(params, f, m);
    Ok((v.w, v.dw_df))
}

/// Ŵ(F, H, m) with H standing in for cof F; convex in (F, H) for fixed m.
pub fn polyconvex_lift(params: &MaterialParams, f: &Mat, h: &Mat, m: &Vector) -> f64 {
    let ftm = f.tr_mul_vec(m);
    let htm = h.tr_mul_vec(m);
    params.mu * f.frobenius_sq().powf(0.5 * params.p)
        + params.gamma * h.frobenius_sq()
        + params.beta1 * linalg::dot(&ftm, &ftm)
        + params.beta2 * linalg::dot(&htm, &htm)
        - params.w0(f.dim())
}
