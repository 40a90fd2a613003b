//! Field snapshots as legacy ASCII VTK unstructured grids.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{element_mean_det, ReferenceMesh, State};

/// Which node positions go into POINTS.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Configuration {
    Deformed,
    Reference,
}

/// Writes nodal M as VECTORS "M" and the element mean of det∇y as cell
/// scalars "detF", on the deformed or the reference mesh.
pub fn write_fields(mesh: &ReferenceMesh, q: &State, configuration: Configuration, path: &Path) -> Result<()> {
    q.check_mesh(mesh)?;
    let dim = mesh.dim();
    let (cell_type, order): (u8, &[usize]) = match dim {
        2 => (9, &[0, 1, 3, 2]),
        _ => (12, &[0, 1, 3, 2, 4, 5, 7, 6]),
    };
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nmagnetoelastic state\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let n = mesh.n_nodes();
    writeln!(s, "POINTS {n} double").unwrap();
    for a in 0..n {
        let p = match configuration {
            Configuration::Deformed => q.y.node(a),
            Configuration::Reference => *mesh.node(a),
        };
        writeln!(s, "{:.17e} {:.17e} {:.17e}", p[0], p[1], if dim == 3 { p[2] } else { 0.0 }).unwrap();
    }
    let ne = mesh.n_elements();
    let per = order.len();
    writeln!(s, "CELLS {ne} {}", ne * (per + 1)).unwrap();
    for e in 0..ne {
        let nodes = mesh.element_nodes(e);
        s.push_str(&per.to_string());
        for &k in order {
            write!(s, " {}", nodes[k]).unwrap();
        }
        s.push('\n');
    }
    writeln!(s, "CELL_TYPES {ne}").unwrap();
    for _ in 0..ne {
        writeln!(s, "{cell_type}").unwrap();
    }
    writeln!(s, "CELL_DATA {ne}\nSCALARS detF double 1\nLOOKUP_TABLE default").unwrap();
    for d in element_mean_det(mesh, &q.y) {
        writeln!(s, "{d:.17e}").unwrap();
    }
    writeln!(s, "POINT_DATA {n}\nVECTORS M double").unwrap();
    for a in 0..n {
        let m = q.m.node(a);
        writeln!(s, "{:.17e} {:.17e} {:.17e}", m[0], m[1], if dim == 3 { m[2] } else { 0.0 }).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
