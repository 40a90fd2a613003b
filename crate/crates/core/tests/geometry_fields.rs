use magnetoelastic::geometry::{
    ciarlet_necas_residual, default_probe, determinant_stats, element_mean_det, BoundarySpec, DeformationField,
    MagnetizationField, ReferenceMesh,
};
use magnetoelastic::linalg::Mat;
use magnetoelastic::material::{exchange_energy, MaterialParams};

mod common;
use common::deformed_exchange;

fn params() -> MaterialParams {
    MaterialParams {
        mu: 1.0,
        p: 3.0,
        gamma: 0.0,
        beta1: 0.0,
        beta2: 0.0,
        alpha: 0.7,
        mu0: 1.0,
        h_c: 0.0,
    }
}

#[test]
fn pulled_back_exchange_equals_deformed_configuration_value() {
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[10, 10], BoundarySpec::default()).unwrap();
    let maps = [
        Mat::identity(2),
        Mat::diag(&[2.0, 0.5]),
        Mat::from_rows(&[&[1.0, 0.3], &[0.0, 1.0]]),
    ];
    for a in maps {
        let y = DeformationField::affine(&mesh, &a, &[0.1, -0.2, 0.0]);
        // m defined on the deformed body, pulled back through y.
        let m = MagnetizationField::from_fn(&mesh, |x| {
            let z = a.mul_vec(x);
            let th = 1.3 * z[0] - 0.7 * z[1] * z[1];
            [th.cos(), th.sin(), 0.0]
        });
        let pulled = exchange_energy(&mesh, &y, &m, &params(), 0.1).unwrap();
        let direct = deformed_exchange(&mesh, &y, &m, params().alpha);
        assert!((pulled - direct).abs() <= 1e-10 * (1.0 + direct), "{pulled} vs {direct}");
    }
}

#[test]
fn volume_preserving_maps_have_unit_determinant() {
    let mesh = ReferenceMesh::new(&[1.0, 2.0], &[4, 6], BoundarySpec::default()).unwrap();
    let y = DeformationField::affine(&mesh, &Mat::from_rows(&[&[2.0, 0.3], &[0.0, 0.5]]), &[0.0; 3]);
    let stats = determinant_stats(&mesh, &y);
    assert!(stats.incompressibility_residual < 1e-14);
    assert!(element_mean_det(&mesh, &y).iter().all(|d| (d - 1.0).abs() < 1e-14));
}

#[test]
fn wound_strip_fails_the_injectivity_check() {
    // A strip of length 3π wrapped onto an annulus overlaps itself on a third
    // of its length; orientation is preserved everywhere, so only the global
    // check sees it.
    let mesh = ReferenceMesh::new(&[3.0 * std::f64::consts::PI, 0.1], &[96, 2], BoundarySpec::default()).unwrap();
    let y = DeformationField::from_fn(&mesh, |x| {
        let r = 1.0 + x[1];
        [r * x[0].cos(), -r * x[0].sin(), 0.0]
    });
    assert!(element_mean_det(&mesh, &y).iter().all(|d| *d > 0.0));
    let probe = default_probe(&mesh, &y, 200).unwrap();
    assert!(ciarlet_necas_residual(&mesh, &y, &probe).unwrap() > 0.1);
    let identity = DeformationField::identity(&mesh);
    let probe = default_probe(&mesh, &identity, 200).unwrap();
    assert_eq!(ciarlet_necas_residual(&mesh, &identity, &probe).unwrap(), 0.0);
}
