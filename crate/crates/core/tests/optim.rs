use magnetoelastic::geometry::{BoundarySpec, BoxGrid, DeformationField, MagnetizationField, ReferenceMesh, State};
use magnetoelastic::magnetostatics::StrayFieldModel;
use magnetoelastic::material::{EnergyModel, LoadHistory, Loads, MaterialParams};
use magnetoelastic::optim::{minimize_from, project_saturation, IncrementalObjective, Objective, SolverOptions};

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

fn perturbed(mesh: &ReferenceMesh) -> State {
    State {
        y: DeformationField::from_fn(mesh, |x| [x[0] + 0.02 * x[0] * x[1], x[1] - 0.01 * x[0] * x[0], 0.0]),
        m: MagnetizationField::from_fn(mesh, |x| {
            let t = 0.5 * x[0] + 0.3 * x[1] - 0.2;
            [t.cos(), t.sin(), 0.0]
        }),
    }
}

#[test]
fn frozen_objective_gradient_matches_finite_differences() {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[5, 5], BoundarySpec::default()).unwrap();
    let p = params();
    let loads = Loads {
        h: LoadHistory::constant(&[0.3, 0.1]),
        ..Default::default()
    };
    let grid = BoxGrid::around_mesh(&mesh, 3.0, 24).unwrap();
    let stray = StrayFieldModel::new(&grid, 1.0, 1e-10, 2).unwrap();
    let model = EnergyModel {
        mesh: &mesh,
        params: &p,
        loads: &loads,
        det_floor: 0.1,
    };
    let q = perturbed(&mesh);
    let prev = MagnetizationField::uniform(&mesh, &[1.0, 0.0, 0.0]).unwrap();
    let mut obj = IncrementalObjective::new(model, Some(&stray), 0.0, Some((&prev, 0.25, 1e-2)), 1.2);
    obj.anchor(&q, 100.0).unwrap();
    // Evaluate away from the anchor so the quadratic part contributes.
    let mut x = q.clone();
    for v in x.m.values_mut() {
        *v *= 1.01;
    }
    let e = obj.evaluate(&x, 100.0).unwrap();
    let h = 1e-6;
    let gmax = e.grad_y.iter().chain(&e.grad_m).map(|v| v.abs()).fold(0.0, f64::max);
    for k in (0..e.grad_y.len()).step_by(3) {
        for is_y in [true, false] {
            let (mut a, mut b) = (x.clone(), x.clone());
            let g = if is_y {
                a.y.values_mut()[k] += h;
                b.y.values_mut()[k] -= h;
                e.grad_y[k]
            } else {
                a.m.values_mut()[k] += h;
                b.m.values_mut()[k] -= h;
                e.grad_m[k]
            };
            let fd = (obj.evaluate(&a, 100.0).unwrap().value - obj.evaluate(&b, 100.0).unwrap().value) / (2.0 * h);
            assert!((fd - g).abs() <= 1e-5 * gmax, "{k} (y: {is_y}): {fd} vs {g}");
        }
    }
}

#[test]
fn relaxation_lowers_the_energy_and_keeps_constraints() {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[6, 6], BoundarySpec::default()).unwrap();
    let p = params();
    let loads = Loads {
        h: LoadHistory::constant(&[0.0, 0.5]),
        ..Default::default()
    };
    let model = EnergyModel {
        mesh: &mesh,
        params: &p,
        loads: &loads,
        det_floor: 0.1,
    };
    let solver = SolverOptions::default();
    let start = perturbed(&mesh);
    let before = model.total_energy(0.0, &start, 0.0, solver.kappa).unwrap().total;
    let mut obj = IncrementalObjective::new(model, None, 0.0, None, solver.stray_majorant);
    let (q, d) = minimize_from(&mut obj, &start, &solver, solver.kappa).unwrap();
    let after = model.total_energy(0.0, &q, 0.0, d.kappa).unwrap().total;
    assert!(after < before, "{after} vs {before}");
    assert!(d.history.windows(2).all(|w| w[1] <= w[0]));
    assert!(d.incompressibility_residual <= solver.tol_incomp);
    assert!(q.m.saturation_defect() <= 1e-12);
    // The field points along h, so the minimizer turns M towards e₂.
    let mean: f64 = q.m.values().iter().skip(1).step_by(2).sum::<f64>() / mesh.n_nodes() as f64;
    assert!(mean > 0.9, "{mean}");
}

#[test]
fn saturation_projection_normalizes_every_node() {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[3, 3], BoundarySpec::default()).unwrap();
    let raw = MagnetizationField::from_fn(&mesh, |x| [1.0 + x[0], 0.5 - x[1], 0.0]);
    let m = project_saturation(&raw).unwrap();
    assert!(m.saturation_defect() <= 1e-15);
}
