//! Sampled global-stability audit, energy-balance checks and the a-priori
//! series.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::fields::{gradient_at, pullback_gradient, DeformationField, MagnetizationField, State};
use crate::geometry::mesh::ReferenceMesh;
use crate::geometry::raster::RasterPlan;
use crate::linalg::{axis_rotation, planar_rotation, Mat, Vector};
use crate::magnetostatics::StrayFieldSolution;

use super::step::Problem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    /// Competitors per audited step.
    pub competitors: usize,
    /// Audit every `stride`-th step (the first and last are always audited).
    pub stride: usize,
    /// Stability tolerance relative to 1 + |𝓔|.
    pub tol_stab: f64,
    /// Energy-balance tolerance relative to 1 + |𝓔|.
    pub tol_bal: f64,
    /// Minimizations restarted from violating competitors per step.
    pub max_restarts: usize,
    /// Probe cells per axis for the Ciarlet–Nečas residual.
    pub probe_cells: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            competitors: 200,
            stride: 1,
            tol_stab: 1e-3,
            tol_bal: 1e-6,
            max_restarts: 3,
            probe_cells: 96,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(invalid("audit.stride must be positive"));
        }
        if !(self.tol_stab > 0.0) || !(self.tol_bal > 0.0) {
            return Err(invalid("audit tolerances must be positive"));
        }
        if self.probe_cells < 2 {
            return Err(invalid("audit.probe_cells must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CompetitorKind {
    GlobalFlip,
    /// Stored state of an earlier step.
    Earlier(usize),
    UniformRotation,
    PatchRotation,
    Jitter,
    /// Divergence-free displacement vanishing on the Dirichlet faces.
    Shear,
}

#[derive(Clone, Debug)]
pub struct Competitor {
    pub kind: CompetitorKind,
    pub state: State,
}

impl Competitor {
    fn same_deformation(&self) -> bool {
        !matches!(self.kind, CompetitorKind::Earlier(_) | CompetitorKind::Shear)
    }
}

fn rng_for(seed: u64, step: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_rotation(dim: usize, rng: &mut ChaCha8Rng, max_angle: f64) -> Mat {
    let angle = rng.gen_range(-max_angle..max_angle);
    if dim == 2 {
        planar_rotation(2, angle)
    } else {
        let axis: Vector = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        if crate::linalg::norm(&axis) < 1e-3 {
            planar_rotation(3, angle)
        } else {
            axis_rotation(&axis, angle)
        }
    }
}

fn rotate_nodes(m: &MagnetizationField, mut rotation_at: impl FnMut(usize) -> Option<Mat>) -> MagnetizationField {
    let mut out = m.clone();
    for a in 0..m.n_nodes() {
        if let Some(r) = rotation_at(a) {
            let v = r.mul_vec(&m.node(a));
            let n = crate::linalg::norm(&v);
            out.set_node(a, &crate::linalg::scaled(1.0 / n, &v));
        }
    }
    out
}

/// Stream-function displacement ∇⊥ψ in a random coordinate plane, with ψ
/// vanishing to second order on the Dirichlet faces; scaled to a nodal
/// maximum of `amplitude`.
fn shear_displacement(mesh: &ReferenceMesh, rng: &mut ChaCha8Rng, amplitude: f64) -> Vec<f64> {
    let dim = mesh.dim();
    let (i, j) = if dim == 2 {
        (0, 1)
    } else {
        [(0, 1), (1, 2), (0, 2)][rng.gen_range(0..3)]
    };
    let ext = mesh.extents().to_vec();
    let k: Vec<f64> = (0..dim).map(|_| rng.gen_range(0..3) as f64).collect();
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let faces = mesh.boundary().dirichlet.clone();
    let psi = |x: &[f64]| -> f64 {
        let mut v = (0..dim)
            .map(|a| std::f64::consts::PI * k[a] * x[a] / ext[a])
            .sum::<f64>()
            + phase;
        v = v.cos();
        for f in &faces {
            let axis = f.axis();
            let d = if f.is_max() { ext[axis] - x[axis] } else { x[axis] };
            v *= d * d;
        }
        v
    };
    let h = 1e-6 * ext.iter().cloned().fold(0.0, f64::max);
    let mut disp = vec![0.0; mesh.n_nodes() * dim];
    for a in 0..mesh.n_nodes() {
        let x = mesh.node(a);
        let partial = |axis: usize| {
            let mut p = *x;
            let mut m = *x;
            p[axis] += h;
            m[axis] -= h;
            (psi(&p[..dim]) - psi(&m[..dim])) / (2.0 * h)
        };
        if !mesh.is_dirichlet(a) {
            disp[a * dim + i] = partial(j);
            disp[a * dim + j] = -partial(i);
        }
    }
    let peak = disp
        .chunks_exact(dim)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if peak > 0.0 {
        disp.iter_mut().for_each(|v| *v *= amplitude / peak);
    }
    disp
}

/// Deterministic competitor set for (seed, step): the global flip, up to three
/// earlier states, then uniform, patch and jittered rotations of M and
/// volume-preserving shears of y in turn.
pub fn sample_competitors(
    mesh: &ReferenceMesh,
    q: &State,
    earlier: &[(usize, &State)],
    count: usize,
    seed: u64,
    step: usize,
) -> Vec<Competitor> {
    let dim = mesh.dim();
    let mut rng = rng_for(seed, step);
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    out.push(Competitor {
        kind: CompetitorKind::GlobalFlip,
        state: State {
            y: q.y.clone(),
            m: q.m.negated(),
        },
    });
    for &(k, s) in earlier.iter().take(3) {
        if out.len() < count && s != q {
            out.push(Competitor {
                kind: CompetitorKind::Earlier(k),
                state: s.clone(),
            });
        }
    }
    let h_min = mesh.spacing()[..dim].iter().cloned().fold(f64::INFINITY, f64::min);
    let diameter = mesh.diameter();
    let mut turn = 0;
    while out.len() < count {
        let state = match turn % 4 {
            0 => {
                let r = random_rotation(dim, &mut rng, std::f64::consts::PI);
                State {
                    y: q.y.clone(),
                    m: rotate_nodes(&q.m, |_| Some(r)),
                }
            }
            1 => {
                let centre = *mesh.node(rng.gen_range(0..mesh.n_nodes()));
                let radius = rng.gen_range(0.1..0.5) * diameter;
                let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                let axis: Vector = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                State {
                    y: q.y.clone(),
                    m: rotate_nodes(&q.m, |a| {
                        let x = mesh.node(a);
                        let d = (0..dim).map(|k| (x[k] - centre[k]).powi(2)).sum::<f64>().sqrt();
                        (d < radius).then(|| {
                            let theta = angle * (1.0 - d / radius);
                            if dim == 2 || crate::linalg::norm(&axis) < 1e-3 {
                                planar_rotation(dim, theta)
                            } else {
                                axis_rotation(&axis, theta)
                            }
                        })
                    }),
                }
            }
            2 => {
                let sigma = if rng.gen_bool(0.5) { 0.02 } else { 0.3 };
                let rotations: Vec<Mat> = (0..q.m.n_nodes()).map(|_| random_rotation(dim, &mut rng, sigma)).collect();
                State {
                    y: q.y.clone(),
                    m: rotate_nodes(&q.m, |a| Some(rotations[a])),
                }
            }
            _ => {
                let amplitude = rng.gen_range(0.001..0.2) * h_min;
                let disp = shear_displacement(mesh, &mut rng, amplitude);
                let mut y = q.y.clone();
                for (v, d) in y.values_mut().iter_mut().zip(&disp) {
                    *v += d;
                }
                State { y, m: q.m.clone() }
            }
        };
        let kind = [
            CompetitorKind::UniformRotation,
            CompetitorKind::PatchRotation,
            CompetitorKind::Jitter,
            CompetitorKind::Shear,
        ][turn % 4];
        out.push(Competitor { kind, state });
        turn += 1;
    }
    out
}

/// Outcome of a sampled stability audit.
#[derive(Clone, Debug)]
pub struct StabilityResult {
    /// min over competitors of r = 𝓔(t, q̃) + 𝒟(q, q̃) − 𝓔(t, q); +∞ when no
    /// competitor could be evaluated.
    pub residual: f64,
    pub worst: Option<usize>,
    pub evaluated: usize,
    /// Competitors outside the admissible set (det ≤ det_floor).
    pub skipped: usize,
}

/// Evaluates every competitor (in parallel; reduction in sampling order).
#[allow(clippy::too_many_arguments)]
pub fn stability_audit(
    problem: &Problem,
    t: f64,
    q: &State,
    energy: f64,
    stray: Option<&StrayFieldSolution>,
    kappa: f64,
    competitors: &[Competitor],
) -> Result<StabilityResult> {
    let plan = match problem.stray {
        Some(model) => Some(RasterPlan::new(problem.mesh, &q.y, model.grid(), model.samples_per_axis())?),
        None => None,
    };
    let residuals: Vec<Result<Option<f64>>> = competitors
        .par_iter()
        .map(|c| {
            let e_ms = match (problem.stray, &plan) {
                (Some(model), Some(plan)) if c.same_deformation() => {
                    model.evaluate_on_plan(problem.mesh, plan, &c.state.m, stray)?.energy
                }
                (Some(model), _) => match model.evaluate(problem.mesh, &c.state, stray) {
                    Ok(e) => e.energy,
                    Err(e) if is_inadmissible(&e) => return Ok(None),
                    Err(e) => return Err(e),
                },
                (None, _) => 0.0,
            };
            let ledger = match problem.model().total_energy(t, &c.state, e_ms, kappa) {
                Ok(l) => l,
                Err(e) if is_inadmissible(&e) => return Ok(None),
                Err(e) => return Err(e),
            };
            let d = problem.dissipation(&q.m, &c.state.m)?;
            Ok(Some(ledger.total + d - energy))
        })
        .collect();
    let mut result = StabilityResult {
        residual: f64::INFINITY,
        worst: None,
        evaluated: 0,
        skipped: 0,
    };
    for (i, r) in residuals.into_iter().enumerate() {
        match r? {
            Some(r) => {
                result.evaluated += 1;
                if r < result.residual {
                    result.residual = r;
                    result.worst = Some(i);
                }
            }
            None => result.skipped += 1,
        }
    }
    Ok(result)
}

fn is_inadmissible(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateDeformation { .. } | Error::DegenerateMagnetization { .. } | Error::BoxOverflow { .. }
    )
}

/// (∫_Ω |∇y|^p)^{1/p} by quadrature.
pub fn deformation_norm(mesh: &ReferenceMesh, y: &DeformationField, p: f64) -> f64 {
    let quad = mesh.quadrature();
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        for (q, &w) in quad.weights.iter().enumerate() {
            total += w * gradient_at(mesh, y.values(), e, q).frobenius().powf(p);
        }
    }
    total.powf(1.0 / p)
}

/// ∫_{Ω^y} |∇m|² = ∫_Ω |∇M (∇y)⁻¹|² det∇y.
pub fn deformed_exchange_integral(mesh: &ReferenceMesh, q: &State, det_floor: f64) -> Result<f64> {
    let quad = mesh.quadrature();
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        for (k, &w) in quad.weights.iter().enumerate() {
            let f = gradient_at(mesh, q.y.values(), e, k);
            let g = gradient_at(mesh, q.m.values(), e, k);
            total += w * pullback_gradient(&f, &g, det_floor)?.frobenius_sq() * f.det();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::BoundarySpec;
    use crate::material::{Loads, MaterialParams};
    use crate::optim::SolverOptions;

    fn setup() -> (ReferenceMesh, MaterialParams, Loads, SolverOptions) {
        let mesh = ReferenceMesh::new(&[1.0, 1.0], &[4, 4], BoundarySpec::default()).unwrap();
        let params: MaterialParams =
            serde_json::from_str(r#"{"mu": 0.5, "p": 3, "beta1": 0.1, "beta2": 0.1, "alpha": 0.05, "h_c": 0.3}"#).unwrap();
        (mesh, params, Loads::default(), SolverOptions::default())
    }

    #[test]
    fn sampler_is_deterministic_and_admissible() {
        let (mesh, ..) = setup();
        let q = State {
            y: DeformationField::identity(&mesh),
            m: MagnetizationField::uniform(&mesh, &[1.0, 0.0, 0.0]).unwrap(),
        };
        let a = sample_competitors(&mesh, &q, &[], 40, 7, 3);
        let b = sample_competitors(&mesh, &q, &[], 40, 7, 3);
        let c = sample_competitors(&mesh, &q, &[], 40, 7, 4);
        assert_eq!(a.len(), 40);
        assert!(a.iter().zip(&b).all(|(x, y)| x.state == y.state));
        assert!(a.iter().zip(&c).skip(1).any(|(x, y)| x.state != y.state));
        for comp in &a {
            assert!(comp.state.m.saturation_defect() < 1e-14);
            if comp.kind == CompetitorKind::Shear {
                for n in 0..mesh.n_nodes() {
                    if mesh.is_dirichlet(n) {
                        assert_eq!(comp.state.y.node(n), q.y.node(n));
                    }
                }
                let stats = crate::geometry::fields::determinant_stats(&mesh, &comp.state.y);
                assert!(stats.min > 0.5);
            }
        }
    }

    #[test]
    fn flip_under_zero_field_costs_its_dissipation() {
        let (mesh, params, loads, solver) = setup();
        let problem = Problem {
            mesh: &mesh,
            params: &params,
            loads: &loads,
            stray: None,
            solver: &solver,
        };
        let q = State {
            y: DeformationField::identity(&mesh),
            m: MagnetizationField::uniform(&mesh, &[0.6, 0.8, 0.0]).unwrap(),
        };
        let e = problem.energy(0.0, &q, 1e3, None).unwrap().ledger.total;
        let flip = sample_competitors(&mesh, &q, &[], 1, 0, 0);
        let r = stability_audit(&problem, 0.0, &q, e, None, 1e3, &flip).unwrap();
        // Even energy, |M − (−M)| = 2 on |Ω| = 1.
        assert!((r.residual - 2.0 * params.h_c).abs() < 1e-12);
        let same = [Competitor {
            kind: CompetitorKind::Earlier(0),
            state: q.clone(),
        }];
        let r = stability_audit(&problem, 0.0, &q, e, None, 1e3, &same).unwrap();
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn a_priori_quantities_for_affine_states() {
        let (mesh, ..) = setup();
        let y = DeformationField::identity(&mesh);
        assert!((deformation_norm(&mesh, &y, 3.0) - 2f64.sqrt()).abs() < 1e-12);
        let m = MagnetizationField::from_fn(&mesh, |x| [(0.3 * x[0]).cos(), (0.3 * x[0]).sin(), 0.0]);
        let ex = deformed_exchange_integral(&mesh, &State { y, m }, 0.1).unwrap();
        // |∂ₓM|² = 0.09 for the exact field; Q1 interpolation slightly less.
        assert!((ex - 0.09).abs() < 1e-3);
    }
}
