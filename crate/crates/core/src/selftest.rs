//! Quick invariant checks run by `magel selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::evolution::{l1_distance, run_evolution, uniform_partition, AuditConfig, EvolutionConfig, Problem};
use crate::geometry::{BoundarySpec, BoxGrid, DeformationField, MagnetizationField, ReferenceMesh, State};
use crate::linalg::{axis_rotation, Mat, Vector};
use crate::magnetostatics::StrayFieldModel;
use crate::material::{density, EnergyModel, LoadHistory, Loads, MaterialParams};
use crate::optim::SolverOptions;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn params() -> MaterialParams {
    MaterialParams {
        mu: 0.5,
        p: 3.0,
        gamma: 0.1,
        beta1: 0.05,
        beta2: 0.05,
        alpha: 0.05,
        mu0: 1.0,
        h_c: 0.25,
    }
}

fn unit(rng: &mut ChaCha8Rng) -> Vector {
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = crate::linalg::norm(&v);
        if n > 0.1 && n <= 1.0 {
            return crate::linalg::scaled(1.0 / n, &v);
        }
    }
}

fn frame_indifference(rng: &mut ChaCha8Rng) -> Check {
    let p = params();
    let mut worst: f64 = 0.0;
    let mut even = true;
    for _ in 0..2000 {
        let mut f = Mat::identity(3);
        for i in 0..3 {
            for j in 0..3 {
                f.add_to(i, j, rng.gen_range(-0.5..0.5));
            }
        }
        let m = unit(rng);
        let r = axis_rotation(&unit(rng), rng.gen_range(0.0..std::f64::consts::TAU));
        let w = density::evaluate(&p, &f, &m).w;
        let rf = r * f;
        let wr = density::evaluate(&p, &rf, &r.mul_vec(&m)).w;
        worst = worst.max((wr - w).abs() / (1.0 + w.abs()));
        even &= density::evaluate(&p, &f, &crate::linalg::scaled(-1.0, &m)).w == w;
    }
    Check {
        name: "frame indifference and evenness of W",
        passed: worst <= 1e-12 && even,
        detail: format!("max relative deviation {worst:.2e}, even: {even}"),
    }
}

fn random_state(mesh: &ReferenceMesh, rng: &mut ChaCha8Rng) -> State {
    let y: Vec<f64> = DeformationField::identity(mesh).values().iter().map(|v| v + rng.gen_range(-0.02..0.02)).collect();
    // Planar meshes only.
    let m: Vec<f64> = (0..mesh.n_nodes())
        .flat_map(|_| {
            let (s, c) = rng.gen_range(0.0..std::f64::consts::TAU).sin_cos();
            [c, s]
        })
        .collect();
    State {
        y: DeformationField::from_values(mesh.dim(), y),
        m: MagnetizationField::from_values(mesh.dim(), m),
    }
}

fn gradient(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[4, 4], BoundarySpec::default())?;
    let p = params();
    let loads = Loads {
        h: LoadHistory::constant(&[0.3, -0.2]),
        f: LoadHistory::constant(&[0.1, 0.05]),
        g: LoadHistory::constant(&[-0.1, 0.2]),
    };
    let model = EnergyModel {
        mesh: &mesh,
        params: &p,
        loads: &loads,
        det_floor: 0.1,
    };
    let q = random_state(&mesh, rng);
    let (_, gy, gm) = model.raw_gradient(0.0, &q, 10.0, None)?;
    let value = |s: &State| model.raw_gradient(0.0, s, 10.0, None).map(|r| r.0);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let scale = gy.iter().chain(&gm).map(|v| v.abs()).fold(0.0, f64::max);
    for k in (0..gy.len()).step_by(3) {
        for field in 0..2 {
            let (mut a, mut b) = (q.clone(), q.clone());
            let (va, vb, g) = match field {
                0 => (&mut a.y.values_mut()[k], &mut b.y.values_mut()[k], gy[k]),
                _ => (&mut a.m.values_mut()[k], &mut b.m.values_mut()[k], gm[k]),
            };
            *va += h;
            *vb -= h;
            let fd = (value(&a)? - value(&b)?) / (2.0 * h);
            worst = worst.max((fd - g).abs() / scale);
        }
    }
    Ok(Check {
        name: "energy gradient against central differences",
        passed: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e}"),
    })
}

fn dissipation_metric(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[3, 3], BoundarySpec::default())?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let [a, b, c] = [0, 1, 2].map(|_| random_state(&mesh, rng).m);
        let ab = l1_distance(&mesh, &a, &b)?;
        let bc = l1_distance(&mesh, &b, &c)?;
        let ac = l1_distance(&mesh, &a, &c)?;
        let ba = l1_distance(&mesh, &b, &a)?;
        worst = worst.max(ac - ab - bc).max((ab - ba).abs());
    }
    Ok(Check {
        name: "dissipation distance is a metric",
        passed: worst <= 1e-14,
        detail: format!("max triangle/symmetry defect {worst:.2e}"),
    })
}

fn stray_sensitivity(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[4, 4], BoundarySpec::default())?;
    let grid = BoxGrid::around_mesh(&mesh, 2.0, 16)?;
    let model = StrayFieldModel::new(&grid, 1.0, 1e-11, 2)?;
    let q = random_state(&mesh, rng);
    let eval = model.evaluate(&mesh, &q, None)?;
    let g = model.magnetization_sensitivity(&mesh, &eval)?;
    let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in (0..g.len()).step_by(4) {
        let (mut a, mut b) = (q.clone(), q.clone());
        a.m.values_mut()[k] += h;
        b.m.values_mut()[k] -= h;
        let fd = (model.energy(&mesh, &a, None)? - model.energy(&mesh, &b, None)?) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / scale);
    }
    Ok(Check {
        name: "magnetostatic sensitivity against central differences",
        passed: worst <= 1e-3,
        detail: format!("max relative error {worst:.2e}"),
    })
}

fn determinism() -> Result<Check> {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[3, 3], BoundarySpec::default())?;
    let p = params();
    let loads = Loads {
        h: LoadHistory::ramp(0.0, &[1.0, 0.0], 1.0, &[-1.0, 0.0]),
        ..Default::default()
    };
    let solver = SolverOptions::default();
    let problem = Problem {
        mesh: &mesh,
        params: &p,
        loads: &loads,
        stray: None,
        solver: &solver,
    };
    let q0 = State {
        y: DeformationField::identity(&mesh),
        m: MagnetizationField::uniform(&mesh, &[1.0, 0.0, 0.0])?,
    };
    let config = EvolutionConfig {
        times: uniform_partition(0.0, 1.0, 4),
        audit: AuditConfig {
            competitors: 8,
            ..Default::default()
        },
        seed: 7,
    };
    let run = || -> Result<Vec<u64>> {
        let ev = run_evolution(&problem, &q0, &config).map_err(|f| f.error)?;
        Ok(ev
            .trajectory
            .records
            .iter()
            .flat_map(|r| [r.ledger.total, r.dissipation, r.stability_residual])
            .map(f64::to_bits)
            .collect())
    };
    let same = run()? == run()?;
    Ok(Check {
        name: "repeated evolution is bitwise identical",
        passed: same,
        detail: String::new(),
    })
}

/// Runs every check; an error inside a check counts as a failure.
pub fn run_selftest() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let failed = |name: &'static str, e: crate::Error| Check {
        name,
        passed: false,
        detail: e.to_string(),
    };
    vec![
        frame_indifference(&mut rng),
        gradient(&mut rng).unwrap_or_else(|e| failed("energy gradient against central differences", e)),
        dissipation_metric(&mut rng).unwrap_or_else(|e| failed("dissipation distance is a metric", e)),
        stray_sensitivity(&mut rng).unwrap_or_else(|e| failed("magnetostatic sensitivity against central differences", e)),
        determinism().unwrap_or_else(|e| failed("repeated evolution is bitwise identical", e)),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
