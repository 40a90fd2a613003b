//! Galerkin discretization of μ₀Δu = ∇·(χm) on a box with multilinear
//! elements on the box cells, nodal potential and cell-constant m.
//!
//! Boundary values are the dipole and quadrupole far field of χm expanded about
//! the box centre c: with G the fundamental solution of Δ,
//! u(x) ≈ (1/μ₀)[p·∇G(x−c) − Σ_jk Q_jk ∂_j∂_k G(x−c)], p = ∫χm,
//! Q_jk = ∫(z−c)_j m_k. This removes the leading truncation errors of a
//! homogeneous Dirichlet box. The data is linear in the moments, so the
//! solution splits as u = u₀ + Σ_α c_α ℓ_α where u₀ has zero boundary values
//! and the lifts ℓ_α (discrete harmonic extensions of unit-moment data) depend
//! only on the box.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::box_grid::BoxGrid;
use crate::geometry::raster::CellField;
use crate::linalg::Vector;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Operator data and precomputed lifts for one box.
#[derive(Clone, Debug)]
pub struct PoissonBox {
    grid: BoxGrid,
    mu0: f64,
    tol: f64,
    max_iter: usize,
    nodes: [usize; 3],
    /// Stencil weights for offsets in {−1,0,1}^d, lexicographic, axis 0 fastest.
    stencil: Vec<(isize, f64)>,
    interior: Vec<bool>,
    /// (component k, optional lever axis j) of each far-field moment.
    moments: Vec<(usize, Option<usize>)>,
    lifts: Vec<Vec<f64>>,
    /// ∫_c ∂_k φ_a for a cell corner a: ± load_factor[k].
    load_factor: Vector,
}

/// Potential and energy for one magnetization.
#[derive(Clone, Debug)]
pub struct StrayFieldSolution {
    /// Nodal potential on the box nodes.
    pub u: Vec<f64>,
    /// Part of u with zero boundary values.
    pub u0: Vec<f64>,
    /// Far-field moments c_α (dipole, then quadrupole).
    pub moments: Vec<f64>,
    /// s_α = bᵀℓ_α, pairing of the load with the lifts.
    pub lift_pairing: Vec<f64>,
    /// (μ₀/2)∫_{ℝ^d}|∇u|² approximated by ½∫χm·∇u.
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl PoissonBox {
    pub fn new(grid: &BoxGrid, mu0: f64, tol: f64) -> Result<Self> {
        if !(mu0 > 0.0) {
            return Err(invalid("mu0 must be positive"));
        }
        if !(tol > 0.0 && tol < 1.0) {
            return Err(invalid("magnetostatic tolerance must lie in (0, 1)"));
        }
        let dim = grid.dim();
        let nodes = grid.node_counts();
        let h = grid.cell_size();
        let mut strides = [1isize; 3];
        for k in 1..dim {
            strides[k] = strides[k - 1] * nodes[k - 1] as isize;
        }
        let mut stencil = Vec::new();
        for code in 0..3usize.pow(dim as u32) {
            let mut off = [0i32; 3];
            let mut rem = code;
            for o in off.iter_mut().take(dim) {
                *o = (rem % 3) as i32 - 1;
                rem /= 3;
            }
            let mut weight = 0.0;
            for k in 0..dim {
                let mut prod = 1.0;
                for j in 0..dim {
                    prod *= match (j == k, off[j] == 0) {
                        (true, true) => 2.0 / h[j],
                        (true, false) => -1.0 / h[j],
                        (false, true) => 4.0 * h[j] / 6.0,
                        (false, false) => h[j] / 6.0,
                    };
                }
                weight += prod;
            }
            let shift: isize = (0..dim).map(|k| off[k] as isize * strides[k]).sum();
            stencil.push((shift, mu0 * weight));
        }
        let interior = (0..grid.n_nodes()).map(|i| !grid.is_boundary_node(i)).collect();
        let vol = grid.cell_volume();
        let mut load_factor = [0.0; 3];
        for k in 0..dim {
            load_factor[k] = vol / (h[k] * (1 << (dim - 1)) as f64);
        }
        let mut moments: Vec<(usize, Option<usize>)> = (0..dim).map(|k| (k, None)).collect();
        for j in 0..dim {
            for k in 0..dim {
                moments.push((k, Some(j)));
            }
        }
        let mut pb = Self {
            grid: grid.clone(),
            mu0,
            tol,
            max_iter: 20 * grid.n_nodes().max(100),
            nodes,
            stencil,
            interior,
            moments,
            lifts: Vec::new(),
            load_factor,
        };
        let mut lifts = Vec::with_capacity(pb.moments.len());
        for &(k, j) in &pb.moments {
            let g = pb.far_field_boundary(k, j);
            // ℓ = g + w with K_II w = −K_IB g.
            let mut rhs = pb.apply(&g);
            rhs.iter_mut().for_each(|v| *v = -*v);
            let (w, _, _) = pb.cg(&rhs, None)?;
            lifts.push(g.iter().zip(&w).map(|(a, b)| a + b).collect());
        }
        pb.lifts = lifts;
        Ok(pb)
    }

    pub fn grid(&self) -> &BoxGrid {
        &self.grid
    }

    pub fn mu0(&self) -> f64 {
        self.mu0
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Boundary node values of the far field of a unit moment: ∂_kG/μ₀ for a
    /// dipole, −∂_j∂_kG/μ₀ for a quadrupole entry (j, k).
    fn far_field_boundary(&self, k: usize, j: Option<usize>) -> Vec<f64> {
        let dim = self.grid.dim();
        let c = self.grid.center();
        // ∇G = r/(ω|r|^d), ∂_j∂_kG = (δ_jk|r|² − d r_j r_k)/(ω|r|^{d+2})
        let omega = if dim == 2 { 2.0 * std::f64::consts::PI } else { 4.0 * std::f64::consts::PI };
        (0..self.grid.n_nodes())
            .map(|i| {
                if self.interior[i] {
                    return 0.0;
                }
                let x = self.grid.node_position(i);
                let r = crate::linalg::sub(&x, &c);
                let r2 = crate::linalg::dot(&r, &r);
                let rd = r2.powf(0.5 * dim as f64);
                match j {
                    None => r[k] / (omega * self.mu0 * rd),
                    Some(j) => {
                        let delta = if j == k { r2 } else { 0.0 };
                        -(delta - dim as f64 * r[j] * r[k]) / (omega * self.mu0 * rd * r2)
                    }
                }
            })
            .collect()
    }

    /// Far-field moments c_α of a cell field.
    fn moments_of(&self, cell_m: &CellField) -> Vec<f64> {
        let dim = self.grid.dim();
        let vol = self.grid.cell_volume();
        let c = self.grid.center();
        let mut out = vec![0.0; self.moments.len()];
        for cell in 0..self.grid.n_cells() {
            let m = cell_m.cell(cell);
            if m[..dim].iter().all(|v| *v == 0.0) {
                continue;
            }
            let lever = crate::linalg::sub(&self.grid.cell_center(cell), &c);
            for (slot, &(k, j)) in out.iter_mut().zip(&self.moments) {
                let w = j.map_or(1.0, |j| lever[j]);
                *slot += vol * w * m[k];
            }
        }
        out
    }

    /// (μ₀K x)_i at interior nodes, zero at boundary nodes.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            if self.interior[i] {
                let mut s = 0.0;
                for (shift, w) in &self.stencil {
                    s += w * x[(i as isize + shift) as usize];
                }
                *o = s;
            }
        });
        out
    }

    /// Conjugate gradients on the interior block; boundary entries stay zero.
    fn cg(&self, rhs: &[f64], guess: Option<&[f64]>) -> Result<(Vec<f64>, usize, f64)> {
        let n = rhs.len();
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let mut x = match guess {
            Some(g) if g.len() == n => g
                .iter()
                .zip(&self.interior)
                .map(|(v, inside)| if *inside { *v } else { 0.0 })
                .collect(),
            _ => vec![0.0; n],
        };
        // Boundary rows are Dirichlet rows: their load does not enter the solve.
        let rhs: Vec<f64> = rhs
            .iter()
            .zip(&self.interior)
            .map(|(v, inside)| if *inside { *v } else { 0.0 })
            .collect();
        let bnorm = dot(&rhs, &rhs).sqrt();
        if bnorm == 0.0 {
            return Ok((vec![0.0; n], 0, 0.0));
        }
        let ax = self.apply(&x);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let mut it = 0;
        while rr.sqrt() > self.tol * bnorm {
            if it >= self.max_iter {
                return Err(Error::PoissonNotConverged {
                    iterations: it,
                    residual: rr.sqrt() / bnorm,
                });
            }
            let ap = self.apply(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::PoissonNotConverged {
                    iterations: it,
                    residual: rr.sqrt() / bnorm,
                });
            }
            let alpha = rr / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
            it += 1;
        }
        Ok((x, it, rr.sqrt() / bnorm))
    }

    /// Nodal load b_i = ∫χm·∇φ_i for cell-constant m.
    pub fn load(&self, cell_m: &CellField) -> Vec<f64> {
        let dim = self.grid.dim();
        let mut b = vec![0.0; self.grid.n_nodes()];
        for c in 0..self.grid.n_cells() {
            let m = cell_m.cell(c);
            if m[..dim].iter().all(|v| *v == 0.0) {
                continue;
            }
            let base = self.cell_base_node(c);
            for a in 0..(1usize << dim) {
                let node = self.corner_node(base, a);
                let mut s = 0.0;
                for k in 0..dim {
                    let sign = if (a >> k) & 1 == 1 { 1.0 } else { -1.0 };
                    s += sign * self.load_factor[k] * m[k];
                }
                b[node] += s;
            }
        }
        b
    }

    /// Transpose of [`load`](Self::load): cell covector (Bᵀv)_c = ∫_c ∇v_h.
    pub fn load_transpose(&self, v: &[f64]) -> Vec<f64> {
        let dim = self.grid.dim();
        let mut out = vec![0.0; self.grid.n_cells() * dim];
        for c in 0..self.grid.n_cells() {
            let base = self.cell_base_node(c);
            for a in 0..(1usize << dim) {
                let va = v[self.corner_node(base, a)];
                for k in 0..dim {
                    let sign = if (a >> k) & 1 == 1 { 1.0 } else { -1.0 };
                    out[c * dim + k] += sign * self.load_factor[k] * va;
                }
            }
        }
        out
    }

    fn cell_base_node(&self, c: usize) -> usize {
        let mi = self.grid.cell_multi_index(c);
        let mut idx = 0;
        let mut stride = 1;
        for k in 0..self.grid.dim() {
            idx += mi[k] * stride;
            stride *= self.nodes[k];
        }
        idx
    }

    fn corner_node(&self, base: usize, a: usize) -> usize {
        let mut idx = base;
        let mut stride = 1;
        for k in 0..self.grid.dim() {
            if (a >> k) & 1 == 1 {
                idx += stride;
            }
            stride *= self.nodes[k];
        }
        idx
    }

    /// Solves for the potential generated by `cell_m`. `guess` warm-starts the
    /// zero-boundary part u₀.
    pub fn solve(&self, cell_m: &CellField, guess: Option<&StrayFieldSolution>) -> Result<StrayFieldSolution> {
        let dim = self.grid.dim();
        if cell_m.dim != dim || cell_m.values.len() != dim * self.grid.n_cells() {
            return Err(Error::Mismatch("cell magnetization does not match the box".into()));
        }
        if cell_m.values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("cell magnetization must be finite"));
        }
        let b = self.load(cell_m);
        let moments = self.moments_of(cell_m);
        let (u0, iterations, residual) = self.cg(&b, guess.map(|g| g.u0.as_slice()))?;
        let mut u = u0.clone();
        let mut pairing = vec![0.0; self.moments.len()];
        for (alpha, lift) in self.lifts.iter().enumerate() {
            pairing[alpha] = b.iter().zip(lift).map(|(x, y)| x * y).sum();
            for (ui, li) in u.iter_mut().zip(lift) {
                *ui += moments[alpha] * li;
            }
        }
        let energy = 0.5 * b.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>();
        Ok(StrayFieldSolution {
            u,
            u0,
            moments,
            lift_pairing: pairing,
            energy,
            iterations,
            residual,
        })
    }

    /// ∂(energy)/∂(cell m), exact for the discrete energy.
    pub fn cell_gradient(&self, sol: &StrayFieldSolution) -> Vec<f64> {
        let dim = self.grid.dim();
        let sum: Vec<f64> = sol.u.iter().zip(&sol.u0).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut g = self.load_transpose(&sum);
        let vol = self.grid.cell_volume();
        let c = self.grid.center();
        for cell in 0..self.grid.n_cells() {
            let lever = crate::linalg::sub(&self.grid.cell_center(cell), &c);
            for (&(k, j), s) in self.moments.iter().zip(&sol.lift_pairing) {
                let w = j.map_or(1.0, |j| lever[j]);
                g[cell * dim + k] += 0.5 * vol * w * s;
            }
        }
        g
    }

    /// Cell averages of −∇u.
    pub fn stray_field(&self, sol: &StrayFieldSolution) -> CellField {
        let vol = self.grid.cell_volume();
        CellField {
            dim: self.grid.dim(),
            values: self.load_transpose(&sol.u).iter().map(|v| -v / vol).collect(),
        }
    }

    /// (μ₀/2)∫_box |∇u_h|², the part of the field energy inside the box.
    pub fn box_field_energy(&self, sol: &StrayFieldSolution) -> f64 {
        // Apply the full stencil including boundary rows via the interior-only
        // operator on u and the boundary correction of the lifts is not
        // needed: evaluate cell by cell instead.
        let dim = self.grid.dim();
        let h = self.grid.cell_size();
        let g = [-0.5 / 3f64.sqrt() + 0.5, 0.5 / 3f64.sqrt() + 0.5];
        let n_q = 1usize << dim;
        let w = self.grid.cell_volume() / n_q as f64;
        let mut total = 0.0;
        for c in 0..self.grid.n_cells() {
            let base = self.cell_base_node(c);
            for qi in 0..n_q {
                let mut xi = [0.0; 3];
                for k in 0..dim {
                    xi[k] = g[(qi >> k) & 1];
                }
                let grads = crate::geometry::mesh::shape_gradients(dim, &xi);
                let mut grad = [0.0; 3];
                for (a, ga) in grads.iter().enumerate().take(1 << dim) {
                    let ua = sol.u[self.corner_node(base, a)];
                    for k in 0..dim {
                        grad[k] += ua * ga[k] / h[k];
                    }
                }
                total += w * crate::linalg::dot(&grad, &grad);
            }
        }
        0.5 * self.mu0 * total
    }

    /// Relative residual ‖b − μ₀K u‖/‖b‖ over interior nodes.
    pub fn residual(&self, cell_m: &CellField, sol: &StrayFieldSolution) -> f64 {
        let b = self.load(cell_m);
        let ku = self.apply(&sol.u);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..b.len() {
            if self.interior[i] {
                num += (b[i] - ku[i]).powi(2);
                den += b[i] * b[i];
            }
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// One-shot solve on `grid`.
pub fn solve_potential(cell_m: &CellField, grid: &BoxGrid, mu0: f64, tol: f64) -> Result<StrayFieldSolution> {
    PoissonBox::new(grid, mu0, tol)?.solve(cell_m, None)
}

pub fn magnetostatic_energy(sol: &StrayFieldSolution) -> f64 {
    sol.energy
}
