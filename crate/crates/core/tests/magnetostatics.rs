use magnetoelastic::geometry::{BoundarySpec, BoxGrid, DeformationField, MagnetizationField, ReferenceMesh, State};
use magnetoelastic::magnetostatics::{solve_potential, StrayFieldModel};

mod common;
use common::{disk_box, disk_field};

#[test]
fn uniform_disk_energy_approaches_the_analytic_value() {
    // Demagnetizing factor 1/2: E = A/(4μ₀).
    let mu0 = 2.0;
    let mut errors = Vec::new();
    for n in [16, 32, 64] {
        let grid = disk_box(n, 0.5, 3.0);
        let m = disk_field(&grid, 0.5, 8);
        let area: f64 = m.values.iter().step_by(2).sum::<f64>() * grid.cell_volume();
        let sol = solve_potential(&m, &grid, mu0, 1e-10).unwrap();
        errors.push((sol.energy / (area / (4.0 * mu0)) - 1.0).abs());
    }
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 0.05, "{errors:?}");
}

fn body() -> (ReferenceMesh, State) {
    body_with(8)
}

fn body_with(n: usize) -> (ReferenceMesh, State) {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[n, n], BoundarySpec::default()).unwrap();
    let y = DeformationField::from_fn(&mesh, |x| [x[0] + 0.05 * x[1] * x[1], x[1] + 0.03 * x[0], 0.0]);
    let m = MagnetizationField::from_fn(&mesh, |x| {
        let t = 0.6 * x[0] - 0.4 * x[1];
        [t.cos(), t.sin(), 0.0]
    });
    (mesh, State { y, m })
}

#[test]
fn sensitivities_match_finite_differences() {
    let (mesh, q) = body();
    let grid = BoxGrid::around_mesh(&mesh, 2.5, 32).unwrap();
    let model = StrayFieldModel::new(&grid, 1.0, 1e-11, 2).unwrap();
    let eval = model.evaluate(&mesh, &q, None).unwrap();
    let gm = model.magnetization_sensitivity(&mesh, &eval).unwrap();
    let gy = model.deformation_sensitivity(&mesh, &q.m, &eval).unwrap();
    let h = 1e-6;
    for (g, is_y) in [(&gm, false), (&gy, true)] {
        let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for k in (0..g.len()).step_by(7) {
            let (mut a, mut b) = (q.clone(), q.clone());
            if is_y {
                a.y.values_mut()[k] += h;
                b.y.values_mut()[k] -= h;
            } else {
                a.m.values_mut()[k] += h;
                b.m.values_mut()[k] -= h;
            }
            let fd = (model.energy(&mesh, &a, None).unwrap() - model.energy(&mesh, &b, None).unwrap()) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-3 * scale, "{k} (y: {is_y}): {fd} vs {}", g[k]);
        }
    }
}

#[test]
fn energy_is_nearly_translation_invariant() {
    // Several samples per box cell, as in the hysteresis runs.
    let (mesh, q) = body_with(32);
    let grid = BoxGrid::around_mesh(&mesh, 3.0, 64).unwrap();
    let model = StrayFieldModel::new(&grid, 1.0, 1e-10, 2).unwrap();
    let base = model.energy(&mesh, &q, None).unwrap();
    for shift in [[0.013, 0.0], [-0.021, 0.037]] {
        let mut moved = q.clone();
        for (k, v) in moved.y.values_mut().iter_mut().enumerate() {
            *v += shift[k % 2];
        }
        let e = model.energy(&mesh, &moved, None).unwrap();
        // Sub-cell shifts move the deposit between cells; the change is a
        // discretization error of a few 1e-3.
        assert!((e - base).abs() <= 5e-3 * base, "{e} vs {base}");
    }
}

#[test]
fn reversing_the_magnetization_keeps_the_energy() {
    let (mesh, q) = body();
    let grid = BoxGrid::around_mesh(&mesh, 3.0, 32).unwrap();
    let model = StrayFieldModel::new(&grid, 1.0, 1e-11, 2).unwrap();
    let e = model.energy(&mesh, &q, None).unwrap();
    let r = State {
        y: q.y.clone(),
        m: q.m.negated(),
    };
    let er = model.energy(&mesh, &r, None).unwrap();
    assert!((e - er).abs() <= 1e-9 * e);
}
