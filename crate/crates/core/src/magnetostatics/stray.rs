//! Stray-field energy of a state (y, M): rasterize, solve, and pull the
//! M-sensitivity back to the mesh nodes.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::box_grid::BoxGrid;
use crate::geometry::fields::{MagnetizationField, State};
use crate::geometry::mesh::ReferenceMesh;
use crate::geometry::raster::{CellField, RasterPlan};
use crate::magnetostatics::poisson::{PoissonBox, StrayFieldSolution};

/// A box with its operator and the rasterization density.
#[derive(Clone, Debug)]
pub struct StrayFieldModel {
    poisson: PoissonBox,
    samples_per_axis: usize,
}

/// Everything computed for one state; reusable for its sensitivity.
#[derive(Clone, Debug)]
pub struct StrayEvaluation {
    pub energy: f64,
    pub cell_m: CellField,
    pub solution: StrayFieldSolution,
    pub plan: RasterPlan,
}

impl StrayFieldModel {
    pub fn new(grid: &BoxGrid, mu0: f64, tol: f64, samples_per_axis: usize) -> Result<Self> {
        if samples_per_axis == 0 {
            return Err(Error::Invalid("box.samples_per_axis must be positive".into()));
        }
        Ok(Self {
            poisson: PoissonBox::new(grid, mu0, tol)?,
            samples_per_axis,
        })
    }

    pub fn poisson(&self) -> &PoissonBox {
        &self.poisson
    }

    pub fn samples_per_axis(&self) -> usize {
        self.samples_per_axis
    }

    pub fn grid(&self) -> &BoxGrid {
        self.poisson.grid()
    }

    pub fn evaluate(&self, mesh: &ReferenceMesh, q: &State, guess: Option<&StrayFieldSolution>) -> Result<StrayEvaluation> {
        q.check_mesh(mesh)?;
        let plan = RasterPlan::new(mesh, &q.y, self.poisson.grid(), self.samples_per_axis)?;
        let cell_m = plan.deposit(mesh, &q.m);
        let solution = self.poisson.solve(&cell_m, guess)?;
        Ok(StrayEvaluation {
            energy: solution.energy,
            cell_m,
            solution,
            plan,
        })
    }

    /// Nodal ∂(magnetostatic energy)/∂M at fixed geometry.
    pub fn magnetization_sensitivity(&self, mesh: &ReferenceMesh, eval: &StrayEvaluation) -> Result<Vec<f64>> {
        if eval.plan.n_cells() != self.poisson.grid().n_cells() {
            return Err(Error::Mismatch("rasterization belongs to a different box".into()));
        }
        let cell_grad = self.poisson.cell_gradient(&eval.solution);
        Ok(eval.plan.pull_back(mesh, &cell_grad))
    }

    /// Nodal ∂(magnetostatic energy)/∂y at fixed M.
    pub fn deformation_sensitivity(&self, mesh: &ReferenceMesh, m: &MagnetizationField, eval: &StrayEvaluation) -> Result<Vec<f64>> {
        if eval.plan.n_cells() != self.poisson.grid().n_cells() {
            return Err(Error::Mismatch("rasterization belongs to a different box".into()));
        }
        m.check_mesh(mesh)?;
        let cell_grad = self.poisson.cell_gradient(&eval.solution);
        Ok(eval.plan.deformation_sensitivity(mesh, m, &cell_grad))
    }

    /// As [`evaluate`](Self::evaluate) for a state whose deformation matches
    /// the one `plan` was built for.
    pub fn evaluate_on_plan(
        &self,
        mesh: &ReferenceMesh,
        plan: &RasterPlan,
        m: &MagnetizationField,
        guess: Option<&StrayFieldSolution>,
    ) -> Result<StrayEvaluation> {
        m.check_mesh(mesh)?;
        let cell_m = plan.deposit(mesh, m);
        let solution = self.poisson.solve(&cell_m, guess)?;
        Ok(StrayEvaluation {
            energy: solution.energy,
            cell_m,
            solution,
            plan: plan.clone(),
        })
    }

    /// Energy only, for competitor evaluation.
    pub fn energy(&self, mesh: &ReferenceMesh, q: &State, guess: Option<&StrayFieldSolution>) -> Result<f64> {
        Ok(self.evaluate(mesh, q, guess)?.energy)
    }
}

/// Legacy VTK structured-points dump of the potential u (point data) and
/// |∇u|² (cell data).
pub fn write_potential_vtk(model: &StrayFieldModel, sol: &StrayFieldSolution, path: &Path) -> Result<()> {
    let grid = model.grid();
    let dim = grid.dim();
    let nodes = grid.node_counts();
    let field = model.poisson().stray_field(sol);
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\nmagnetostatic potential\nASCII\nDATASET STRUCTURED_POINTS\n");
    let o = grid.origin();
    let h = grid.cell_size();
    out.push_str(&format!("DIMENSIONS {} {} {}\n", nodes[0], nodes[1], if dim == 3 { nodes[2] } else { 1 }));
    out.push_str(&format!("ORIGIN {} {} {}\n", o[0], o[1], if dim == 3 { o[2] } else { 0.0 }));
    out.push_str(&format!("SPACING {} {} {}\n", h[0], h[1], if dim == 3 { h[2] } else { 1.0 }));
    out.push_str(&format!("POINT_DATA {}\nSCALARS u double 1\nLOOKUP_TABLE default\n", sol.u.len()));
    for v in &sol.u {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out.push_str(&format!("CELL_DATA {}\nSCALARS grad_u_sq double 1\nLOOKUP_TABLE default\n", grid.n_cells()));
    for c in 0..grid.n_cells() {
        let g = field.cell(c);
        out.push_str(&format!("{:.16e}\n", crate::linalg::dot(&g, &g)));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
