//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use magnetoelastic::geometry::{BoundarySpec, BoxGrid, CellField, DeformationField, Face, MagnetizationField, ReferenceMesh, State};
use magnetoelastic::linalg::Mat;
use magnetoelastic::material::{LoadHistory, Loads, MaterialParams};

/// α ∫_{Ω^y} |∇_z m_h|² computed element by element on the deformed
/// quadrilaterals, with a 3-point Gauss rule and the Jacobian of each
/// deformed element taken from its corner positions.
pub fn deformed_exchange(mesh: &ReferenceMesh, y: &DeformationField, m: &MagnetizationField, alpha: f64) -> f64 {
    let g = [0.5 - 0.5 * (0.6f64).sqrt(), 0.5, 0.5 + 0.5 * (0.6f64).sqrt()];
    let w = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        // Corners in counter-clockwise order.
        let nodes = mesh.element_nodes(e);
        let ccw = [nodes[0], nodes[1], nodes[3], nodes[2]];
        let z: Vec<[f64; 2]> = ccw.iter().map(|&a| [y.node(a)[0], y.node(a)[1]]).collect();
        let mv: Vec<[f64; 2]> = ccw.iter().map(|&a| [m.node(a)[0], m.node(a)[1]]).collect();
        for (i, s) in g.iter().enumerate() {
            for (j, t) in g.iter().enumerate() {
                // Bilinear map on [0,1]² with corners (0,0),(1,0),(1,1),(0,1).
                let ds = [-(1.0 - t), 1.0 - t, *t, -t];
                let dt = [-(1.0 - s), -s, *s, 1.0 - s];
                let mut jac = [[0.0; 2]; 2];
                let mut gm = [[0.0; 2]; 2];
                for k in 0..4 {
                    for c in 0..2 {
                        jac[c][0] += z[k][c] * ds[k];
                        jac[c][1] += z[k][c] * dt[k];
                        gm[c][0] += mv[k][c] * ds[k];
                        gm[c][1] += mv[k][c] * dt[k];
                    }
                }
                let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
                let mut sq = 0.0;
                for c in 0..2 {
                    for d in 0..2 {
                        let v = gm[c][0] * inv[0][d] + gm[c][1] * inv[1][d];
                        sq += v * v;
                    }
                }
                total += w[i] * w[j] * sq * det.abs();
            }
        }
    }
    alpha * total
}

/// W(F, m) for constant F = diag(a, 1/a) in 2D, written out by hand.
pub fn density_diag(p: &MaterialParams, a: f64, m: [f64; 2]) -> f64 {
    let b = 1.0 / a;
    let fnorm = (a * a + b * b).sqrt();
    // cof diag(a, b) = diag(b, a)
    let ftm = [a * m[0], b * m[1]];
    let ctm = [b * m[0], a * m[1]];
    let w0 = p.mu * 2f64.powf(p.p / 2.0) + 2.0 * p.gamma + p.beta1 + p.beta2;
    p.mu * fnorm.powf(p.p) + p.gamma * (a * a + b * b) + p.beta1 * (ftm[0].powi(2) + ftm[1].powi(2))
        + p.beta2 * (ctm[0].powi(2) + ctm[1].powi(2))
        - w0
}

pub struct Toy {
    pub mesh: ReferenceMesh,
    pub params: MaterialParams,
    pub loads: Loads,
    pub stretch: f64,
    pub previous: State,
}

pub fn toy(h: [f64; 2], h_c: f64, prev_angle: f64) -> Toy {
    // Both x-faces clamped: the single element keeps its affine deformation.
    let boundary = BoundarySpec {
        dirichlet: vec![Face::XMin, Face::XMax],
        traction: vec![],
    };
    let mesh = ReferenceMesh::new(&[1.0, 1.0], &[1, 1], boundary).unwrap();
    let stretch = 1.4;
    let params = MaterialParams {
        mu: 0.5,
        p: 3.0,
        gamma: 0.1,
        beta1: 0.3,
        beta2: 0.1,
        alpha: 0.05,
        mu0: 1.0,
        h_c,
    };
    let y = DeformationField::affine(&mesh, &Mat::diag(&[stretch, 1.0 / stretch]), &[0.0; 3]);
    let m = MagnetizationField::uniform(&mesh, &[prev_angle.cos(), prev_angle.sin(), 0.0]).unwrap();
    Toy {
        mesh,
        params,
        loads: Loads {
            h: LoadHistory::constant(&h),
            ..Default::default()
        },
        stretch,
        previous: State { y, m },
    }
}

pub fn grid_search(t: &Toy, prev_angle: f64, points: usize) -> f64 {
    let prev = [prev_angle.cos(), prev_angle.sin()];
    let h = &t.loads.h.knots[0].1;
    (0..points)
        .map(|k| {
            let th = std::f64::consts::TAU * k as f64 / points as f64 + prev_angle;
            let m = [th.cos(), th.sin()];
            let dist = ((m[0] - prev[0]).powi(2) + (m[1] - prev[1]).powi(2)).sqrt();
            density_diag(&t.params, t.stretch, m) - (h[0] * m[0] + h[1] * m[1]) + t.params.h_c * dist
        })
        .fold(f64::INFINITY, f64::min)
}

/// Cell averages of χ_disk e₁ by sub × sub point sampling.
pub fn disk_field(grid: &BoxGrid, radius: f64, sub: usize) -> CellField {
    let h = grid.cell_size();
    let mut f = CellField::zeros(2, grid.n_cells());
    for c in 0..grid.n_cells() {
        let mi = grid.cell_multi_index(c);
        let mut inside = 0usize;
        for i in 0..sub {
            for j in 0..sub {
                let x = grid.origin()[0] + (mi[0] as f64 + (i as f64 + 0.5) / sub as f64) * h[0];
                let y = grid.origin()[1] + (mi[1] as f64 + (j as f64 + 0.5) / sub as f64) * h[1];
                if x * x + y * y < radius * radius {
                    inside += 1;
                }
            }
        }
        f.values[2 * c] = inside as f64 / (sub * sub) as f64;
    }
    f
}

/// Square box of side `padding × 2r` centred on the origin.
pub fn disk_box(n: usize, radius: f64, padding: f64) -> BoxGrid {
    let side = padding * 2.0 * radius;
    BoxGrid::new(2, [-0.5 * side, -0.5 * side, 0.0], [side / n as f64, side / n as f64, 0.0], &[n, n]).unwrap()
}
