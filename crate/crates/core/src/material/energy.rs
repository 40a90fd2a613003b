//! Assembly of the stored energy, the load potential and their nodal gradients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::fields::{DeformationField, MagnetizationField, State};
use crate::geometry::mesh::ReferenceMesh;
use crate::linalg::{self, Mat, Vector};
use crate::material::density::evaluate;
use crate::material::loads::{LoadSample, Loads};
use crate::material::params::MaterialParams;

/// Below this |M| at a quadrature point the direction m = M/|M| is undefined.
const MIN_INTERPOLATED_NORM: f64 = 1e-6;

/// Energy terms of one state. `total = elastic + exchange + magnetostatic −
/// load + penalty`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub elastic: f64,
    pub exchange: f64,
    pub magnetostatic: f64,
    /// Work of the applied field, body force and traction; enters `total` with a minus sign.
    pub load: f64,
    pub penalty: f64,
    pub total: f64,
}

impl EnergyLedger {
    pub fn new(elastic: f64, exchange: f64, magnetostatic: f64, load: f64, penalty: f64) -> Self {
        Self {
            elastic,
            exchange,
            magnetostatic,
            load,
            penalty,
            total: elastic + exchange + magnetostatic - load + penalty,
        }
    }
}

/// Integrals of the bulk terms, with nodal gradients when requested.
#[derive(Clone, Debug, Default)]
pub struct BulkTerms {
    pub elastic: f64,
    pub exchange: f64,
    pub penalty: f64,
    pub grad_y: Vec<f64>,
    pub grad_m: Vec<f64>,
}

struct ElementTerms {
    elastic: f64,
    exchange: f64,
    penalty: f64,
    gy: [f64; 24],
    gm: [f64; 24],
}

fn element_terms(
    mesh: &ReferenceMesh,
    params: &MaterialParams,
    y: &[f64],
    m: &[f64],
    e: usize,
    kappa: f64,
    det_floor: f64,
    with_grad: bool,
) -> Result<ElementTerms> {
    let dim = mesh.dim();
    let quad = mesh.quadrature();
    let nodes = mesh.element_nodes(e);
    let mut out = ElementTerms {
        elastic: 0.0,
        exchange: 0.0,
        penalty: 0.0,
        gy: [0.0; 24],
        gm: [0.0; 24],
    };
    for (q, &w) in quad.weights.iter().enumerate() {
        let grads = &quad.grads[q];
        let shape = &quad.shape[q];
        let mut f = Mat::zeros(dim);
        let mut g = Mat::zeros(dim);
        let mut mq = [0.0; 3];
        for (a, &node) in nodes.iter().enumerate() {
            for i in 0..dim {
                let yi = y[node * dim + i];
                let mi = m[node * dim + i];
                mq[i] += shape[a] * mi;
                for j in 0..dim {
                    f.add_to(i, j, yi * grads[a][j]);
                    g.add_to(i, j, mi * grads[a][j]);
                }
            }
        }
        let det = f.det();
        if !(det > det_floor) {
            return Err(Error::DegenerateDeformation {
                min_det: det,
                element: e,
                point: q,
            });
        }
        let mnorm = linalg::norm(&mq);
        if !(mnorm > MIN_INTERPOLATED_NORM) {
            return Err(Error::DegenerateMagnetization { node: nodes[0] });
        }
        let unit = linalg::scaled(1.0 / mnorm, &mq);
        let dens = evaluate(params, &f, &unit);
        let cof = f.cofactor();
        let k = cof.transpose().scale(1.0 / det);
        let a_mat = g * k;
        out.elastic += w * dens.w;
        out.exchange += w * params.alpha * a_mat.frobenius_sq();
        out.penalty += w * kappa * (det - 1.0) * (det - 1.0);
        if !with_grad {
            continue;
        }
        let kt = k.transpose();
        let mut pf = dens.dw_df;
        pf += (a_mat.transpose() * a_mat * kt).scale(-2.0 * params.alpha);
        pf += cof.scale(2.0 * kappa * (det - 1.0));
        let pg = (a_mat * kt).scale(2.0 * params.alpha);
        // Chain rule through m = M/|M|.
        let radial = linalg::dot(&unit, &dens.dw_dm);
        let mut dm = dens.dw_dm;
        linalg::axpy(-radial, &unit, &mut dm);
        let dm = linalg::scaled(1.0 / mnorm, &dm);
        for a in 0..nodes.len() {
            let ga = &grads[a];
            for i in 0..dim {
                let mut sy = 0.0;
                let mut sm = 0.0;
                for j in 0..dim {
                    sy += pf.get(i, j) * ga[j];
                    sm += pg.get(i, j) * ga[j];
                }
                out.gy[a * dim + i] += w * sy;
                out.gm[a * dim + i] += w * (sm + shape[a] * dm[i]);
            }
        }
    }
    Ok(out)
}

/// Elastic, exchange and penalty κ∫(det∇y − 1)² integrals in one pass.
pub fn bulk_terms(
    mesh: &ReferenceMesh,
    params: &MaterialParams,
    y: &DeformationField,
    m: &MagnetizationField,
    kappa: f64,
    det_floor: f64,
    with_grad: bool,
) -> Result<BulkTerms> {
    y.check_mesh(mesh)?;
    m.check_mesh(mesh)?;
    let (yv, mv) = (y.values(), m.values());
    let per_element: Vec<Result<ElementTerms>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| element_terms(mesh, params, yv, mv, e, kappa, det_floor, with_grad))
        .collect();
    let dim = mesh.dim();
    let n = if with_grad { mesh.n_nodes() * dim } else { 0 };
    let mut out = BulkTerms {
        grad_y: vec![0.0; n],
        grad_m: vec![0.0; n],
        ..Default::default()
    };
    for (e, terms) in per_element.into_iter().enumerate() {
        let t = terms?;
        out.elastic += t.elastic;
        out.exchange += t.exchange;
        out.penalty += t.penalty;
        if with_grad {
            for (a, &node) in mesh.element_nodes(e).iter().enumerate() {
                for i in 0..dim {
                    out.grad_y[node * dim + i] += t.gy[a * dim + i];
                    out.grad_m[node * dim + i] += t.gm[a * dim + i];
                }
            }
        }
    }
    Ok(out)
}

/// ∫_Ω W(∇y, M).
pub fn elastic_energy(
    mesh: &ReferenceMesh,
    y: &DeformationField,
    m: &MagnetizationField,
    params: &MaterialParams,
    det_floor: f64,
) -> Result<f64> {
    Ok(bulk_terms(mesh, params, y, m, 0.0, det_floor, false)?.elastic)
}

/// α∫_Ω |(∇M)(∇y)⁻¹|².
pub fn exchange_energy(
    mesh: &ReferenceMesh,
    y: &DeformationField,
    m: &MagnetizationField,
    params: &MaterialParams,
    det_floor: f64,
) -> Result<f64> {
    Ok(bulk_terms(mesh, params, y, m, 0.0, det_floor, false)?.exchange)
}

/// The three parts of the load potential L.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoadPotential {
    pub zeeman: f64,
    pub body: f64,
    pub traction: f64,
}

impl LoadPotential {
    pub fn total(&self) -> f64 {
        self.zeeman + self.body + self.traction
    }
}

/// ∫_Ω M, ∫_Ω y and ∫_{Γt} y; L is linear in the load values through these.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoadMoments {
    pub m: Vector,
    pub y: Vector,
    pub y_traction: Vector,
}

pub fn load_moments(mesh: &ReferenceMesh, q: &State) -> Result<LoadMoments> {
    q.check_mesh(mesh)?;
    let mut out = LoadMoments::default();
    for (a, (v, t)) in mesh.node_volume().iter().zip(mesh.traction_weight()).enumerate() {
        let ya = q.y.node(a);
        linalg::axpy(*v, &q.m.node(a), &mut out.m);
        linalg::axpy(*v, &ya, &mut out.y);
        if *t != 0.0 {
            linalg::axpy(*t, &ya, &mut out.y_traction);
        }
    }
    Ok(out)
}

impl LoadMoments {
    pub fn pair(&self, sample: &LoadSample) -> LoadPotential {
        LoadPotential {
            zeeman: linalg::dot(&sample.h, &self.m),
            body: linalg::dot(&sample.f, &self.y),
            traction: linalg::dot(&sample.g, &self.y_traction),
        }
    }
}

/// L = ∫_Ω h(t)·M + ∫_Ω f(t)·y + ∫_{Γt} g(t)·y.
pub fn load_potential(t: f64, mesh: &ReferenceMesh, q: &State, loads: &Loads) -> Result<LoadPotential> {
    let sample = loads.at(t)?;
    Ok(load_moments(mesh, q)?.pair(&sample))
}

/// ∂_t𝓔 at fixed q: −(∫ ḣ·M + ∫ ḟ·y + ∫_{Γt} ġ·y), right derivative at knots.
pub fn energy_time_derivative(t: f64, mesh: &ReferenceMesh, q: &State, loads: &Loads) -> Result<f64> {
    let rate = loads.rate(t)?;
    Ok(-load_moments(mesh, q)?.pair(&rate).total())
}

/// ∫_{t0}^{t1} ∂_t𝓔(θ, q) dθ, exact because 𝓔 is affine in the loads.
pub fn time_derivative_integral(t0: f64, t1: f64, mesh: &ReferenceMesh, q: &State, loads: &Loads) -> Result<f64> {
    let moments = load_moments(mesh, q)?;
    let l1 = moments.pair(&loads.at(t1)?).total();
    let l0 = moments.pair(&loads.at(t0)?).total();
    Ok(-(l1 - l0))
}

/// Everything needed to evaluate 𝓔(t, ·) except the stray field.
#[derive(Clone, Copy, Debug)]
pub struct EnergyModel<'a> {
    pub mesh: &'a ReferenceMesh,
    pub params: &'a MaterialParams,
    pub loads: &'a Loads,
    pub det_floor: f64,
}

impl<'a> EnergyModel<'a> {
    /// Ledger of 𝓔(t, q) given the magnetostatic energy of q.
    pub fn total_energy(&self, t: f64, q: &State, stray_energy: f64, kappa: f64) -> Result<EnergyLedger> {
        let bulk = bulk_terms(self.mesh, self.params, &q.y, &q.m, kappa, self.det_floor, false)?;
        let load = load_potential(t, self.mesh, q, self.loads)?;
        Ok(EnergyLedger::new(bulk.elastic, bulk.exchange, stray_energy, load.total(), bulk.penalty))
    }

    /// Unmasked, unprojected gradient of 𝓔(t, ·) with the stray field frozen:
    /// `stray_sensitivity` is the nodal M-gradient of the magnetostatic energy
    /// only; callers add any y-gradient of that energy themselves.
    pub fn raw_gradient(
        &self,
        t: f64,
        q: &State,
        kappa: f64,
        stray_sensitivity: Option<&[f64]>,
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mesh = self.mesh;
        let dim = mesh.dim();
        let bulk = bulk_terms(mesh, self.params, &q.y, &q.m, kappa, self.det_floor, true)?;
        let sample = self.loads.at(t)?;
        let mut gy = bulk.grad_y;
        let mut gm = bulk.grad_m;
        for (a, (v, tw)) in mesh.node_volume().iter().zip(mesh.traction_weight()).enumerate() {
            for i in 0..dim {
                gy[a * dim + i] -= v * sample.f[i] + tw * sample.g[i];
                gm[a * dim + i] -= v * sample.h[i];
            }
        }
        if let Some(s) = stray_sensitivity {
            if s.len() != gm.len() {
                return Err(Error::Mismatch("stray-field sensitivity has the wrong length".into()));
            }
            for (g, v) in gm.iter_mut().zip(s) {
                *g += v;
            }
        }
        let load = load_moments(mesh, q)?.pair(&sample).total();
        let value = bulk.elastic + bulk.exchange + bulk.penalty - load;
        Ok((value, gy, gm))
    }

    /// Gradient of 𝓔(t, ·): y-part zero on Dirichlet nodes, M-part projected
    /// node-wise onto the tangent plane of the unit sphere.
    pub fn energy_gradient(
        &self,
        t: f64,
        q: &State,
        kappa: f64,
        stray_sensitivity: Option<&[f64]>,
    ) -> Result<EnergyGradient> {
        let (_, mut gy, mut gm) = self.raw_gradient(t, q, kappa, stray_sensitivity)?;
        mask_dirichlet(self.mesh, &mut gy);
        project_tangent(self.mesh.dim(), q.m.values(), &mut gm);
        Ok(EnergyGradient { y: gy, m: gm })
    }
}

/// Nodal gradients of 𝓔 with respect to y and M.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGradient {
    pub y: Vec<f64>,
    pub m: Vec<f64>,
}

pub fn mask_dirichlet(mesh: &ReferenceMesh, g: &mut [f64]) {
    let dim = mesh.dim();
    for (a, fixed) in mesh.dirichlet_mask().iter().enumerate() {
        if *fixed {
            g[a * dim..(a + 1) * dim].iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// g_a ← (I − M_a⊗M_a) g_a for unit nodal M_a.
pub fn project_tangent(dim: usize, m: &[f64], g: &mut [f64]) {
    for (ma, ga) in m.chunks_exact(dim).zip(g.chunks_exact_mut(dim)) {
        let r: f64 = ma.iter().zip(ga.iter()).map(|(x, y)| x * y).sum();
        for (gi, mi) in ga.iter_mut().zip(ma) {
            *gi -= r * mi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::{BoundarySpec, Face};
    use crate::material::loads::LoadHistory;

    fn params() -> MaterialParams {
        MaterialParams {
            mu: 0.5,
            p: 3.0,
            gamma: 0.1,
            beta1: 0.2,
            beta2: 0.15,
            alpha: 0.05,
            mu0: 1.0,
            h_c: 0.1,
        }
    }

    fn unit_square(n: usize) -> ReferenceMesh {
        ReferenceMesh::new(&[1.0, 1.0], &[n, n], BoundarySpec::default()).unwrap()
    }

    fn wavy_state(mesh: &ReferenceMesh) -> State {
        let y = DeformationField::from_fn(mesh, |x| {
            [
                x[0] + 0.05 * (3.0 * x[1]).sin(),
                x[1] + 0.04 * (2.0 * x[0]).cos() * x[0],
                0.0,
            ]
        });
        let m = MagnetizationField::from_fn(mesh, |x| {
            let t = 1.2 * x[0] - 0.7 * x[1];
            [t.cos(), t.sin(), 0.0]
        });
        State { y, m }
    }

    #[test]
    fn identity_has_zero_elastic_energy() {
        let mesh = unit_square(4);
        let y = DeformationField::identity(&mesh);
        let m = MagnetizationField::from_fn(&mesh, |x| [x[0].cos(), x[0].sin(), 0.0]);
        assert!(elastic_energy(&mesh, &y, &m, &params(), 0.1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn affine_unimodular_state_is_a_constant_integrand() {
        let mesh = ReferenceMesh::new(&[2.0, 1.0], &[4, 2], BoundarySpec::default()).unwrap();
        let a = Mat::from_rows(&[&[1.0, 0.3], &[0.0, 1.0]]);
        let y = DeformationField::affine(&mesh, &a, &[0.0; 3]);
        let dir = [0.6, 0.8, 0.0];
        let m = MagnetizationField::uniform(&mesh, &dir).unwrap();
        let e = elastic_energy(&mesh, &y, &m, &params(), 0.1).unwrap();
        let w = evaluate(&params(), &a, &dir).w;
        assert!((e - 2.0 * w).abs() < 1e-12);
        assert!(exchange_energy(&mesh, &y, &m, &params(), 0.1).unwrap() < 1e-25);
    }

    #[test]
    fn refinement_changes_elastic_energy_little() {
        let p = params();
        let coarse = unit_square(8);
        let fine = unit_square(16);
        let a = wavy_state(&coarse);
        let b = wavy_state(&fine);
        let ea = elastic_energy(&coarse, &a.y, &a.m, &p, 0.1).unwrap();
        let eb = elastic_energy(&fine, &b.y, &b.m, &p, 0.1).unwrap();
        assert!((ea - eb).abs() <= 0.01 * eb.abs(), "{ea} vs {eb}");
    }

    #[test]
    fn exchange_under_diagonal_stretch() {
        // θ linear in x₁, y = diag(2, 1/2)x: ∂₁ scales by 1/2, so energy by 1/4.
        let mesh = unit_square(32);
        let m = MagnetizationField::from_fn(&mesh, |x| [(1.5 * x[0]).cos(), (1.5 * x[0]).sin(), 0.0]);
        let id = DeformationField::identity(&mesh);
        let stretch = DeformationField::affine(&mesh, &Mat::diag(&[2.0, 0.5]), &[0.0; 3]);
        let p = params();
        let direct = exchange_energy(&mesh, &id, &m, &p, 0.1).unwrap();
        let pulled = exchange_energy(&mesh, &stretch, &m, &p, 0.1).unwrap();
        assert!((pulled - 0.25 * direct).abs() < 1e-12 * direct);
        // Continuum value α·1.5² on the unit square.
        assert!((direct - p.alpha * 2.25).abs() < 1e-3 * direct);
    }

    #[test]
    fn load_potential_examples() {
        let mesh = unit_square(3);
        let q = State {
            y: DeformationField::identity(&mesh),
            m: MagnetizationField::uniform(&mesh, &[1.0, 0.0, 0.0]).unwrap(),
        };
        let none = Loads::default();
        assert_eq!(load_potential(0.0, &mesh, &q, &none).unwrap().total(), 0.0);
        let loads = Loads {
            h: LoadHistory::constant(&[1.0, 0.0]),
            ..Default::default()
        };
        let l = load_potential(0.3, &mesh, &q, &loads).unwrap();
        assert!((l.zeeman - 1.0).abs() < 1e-14);
        let flipped = State {
            y: q.y.clone(),
            m: q.m.negated(),
        };
        assert_eq!(load_potential(0.3, &mesh, &flipped, &loads).unwrap().zeeman, -l.zeeman);
    }

    #[test]
    fn time_derivative_examples() {
        let mesh = unit_square(3);
        let q = State {
            y: DeformationField::identity(&mesh),
            m: MagnetizationField::uniform(&mesh, &[1.0, 0.0, 0.0]).unwrap(),
        };
        let loads = Loads {
            h: LoadHistory::ramp(0.0, &[0.0, 0.0], 1.0, &[1.0, 0.0]),
            ..Default::default()
        };
        assert!((energy_time_derivative(0.5, &mesh, &q, &loads).unwrap() + 1.0).abs() < 1e-14);
        let constant = Loads {
            h: LoadHistory::constant(&[0.3, 0.1]),
            ..Default::default()
        };
        assert_eq!(energy_time_derivative(0.5, &mesh, &q, &constant).unwrap(), 0.0);
    }

    #[test]
    fn ledger_adds_up() {
        let mesh = unit_square(6);
        let q = wavy_state(&mesh);
        let loads = Loads {
            h: LoadHistory::constant(&[0.2, -0.1]),
            f: LoadHistory::constant(&[0.05, 0.0]),
            g: LoadHistory::constant(&[0.1, 0.02]),
        };
        let p = params();
        let model = EnergyModel {
            mesh: &mesh,
            params: &p,
            loads: &loads,
            det_floor: 0.1,
        };
        let l = model.total_energy(0.0, &q, 0.37, 10.0).unwrap();
        let sum = l.elastic + l.exchange + l.magnetostatic - l.load + l.penalty;
        assert!((l.total - sum).abs() <= 1e-12 * l.total.abs().max(1.0));
        assert!(l.penalty > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mesh = unit_square(4);
        let q = wavy_state(&mesh);
        let loads = Loads {
            h: LoadHistory::constant(&[0.2, -0.1]),
            f: LoadHistory::constant(&[0.05, 0.03]),
            g: LoadHistory::constant(&[0.1, 0.02]),
        };
        let p = params();
        let model = EnergyModel {
            mesh: &mesh,
            params: &p,
            loads: &loads,
            det_floor: 0.1,
        };
        let kappa = 3.0;
        let (_, gy, gm) = model.raw_gradient(0.0, &q, kappa, None).unwrap();
        let energy = |s: &State| model.total_energy(0.0, s, 0.0, kappa).unwrap().total;
        let h = 1e-6;
        for k in 0..gy.len() {
            let mut sp = q.clone();
            sp.y.values_mut()[k] += h;
            let mut sm = q.clone();
            sm.y.values_mut()[k] -= h;
            let fd = (energy(&sp) - energy(&sm)) / (2.0 * h);
            assert!((fd - gy[k]).abs() <= 1e-6 * gy[k].abs().max(1e-2), "y {k}: {fd} vs {}", gy[k]);
            let mut sp = q.clone();
            sp.m.values_mut()[k] += h;
            let mut sm = q.clone();
            sm.m.values_mut()[k] -= h;
            let fd = (energy(&sp) - energy(&sm)) / (2.0 * h);
            assert!((fd - gm[k]).abs() <= 1e-6 * gm[k].abs().max(1e-2), "m {k}: {fd} vs {}", gm[k]);
        }
    }

    #[test]
    fn projected_gradient_is_masked_and_tangent() {
        let mesh = unit_square(4);
        let mut q = wavy_state(&mesh);
        // Put the Dirichlet face back at the identity.
        for a in 0..mesh.n_nodes() {
            if mesh.is_dirichlet(a) {
                q.y.set_node(a, mesh.node(a));
            }
        }
        let p = params();
        let loads = Loads::default();
        let model = EnergyModel {
            mesh: &mesh,
            params: &p,
            loads: &loads,
            det_floor: 0.1,
        };
        let g = model.energy_gradient(0.0, &q, 1.0, None).unwrap();
        for a in 0..mesh.n_nodes() {
            if mesh.is_dirichlet(a) {
                assert_eq!(&g.y[2 * a..2 * a + 2], &[0.0, 0.0]);
            }
            let ma = q.m.node(a);
            assert!((ma[0] * g.m[2 * a] + ma[1] * g.m[2 * a + 1]).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_identity_state_is_stationary() {
        // The identity carries a hydrostatic stress, so y is only stationary
        // when every face is clamped; M is stationary when h is parallel to it.
        let boundary = BoundarySpec {
            dirichlet: vec![Face::XMin, Face::XMax, Face::YMin, Face::YMax],
            traction: vec![],
        };
        let mesh = ReferenceMesh::new(&[1.0, 1.0], &[4, 4], boundary).unwrap();
        let q = State {
            y: DeformationField::identity(&mesh),
            m: MagnetizationField::uniform(&mesh, &[0.0, 1.0, 0.0]).unwrap(),
        };
        let p = params();
        let loads = Loads {
            h: LoadHistory::constant(&[0.0, 0.7]),
            ..Default::default()
        };
        let model = EnergyModel {
            mesh: &mesh,
            params: &p,
            loads: &loads,
            det_floor: 0.1,
        };
        let g = model.energy_gradient(0.0, &q, 5.0, None).unwrap();
        let norm = g.y.iter().chain(&g.m).map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1e-8, "{norm}");
    }
}
