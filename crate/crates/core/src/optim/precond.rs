//! Banded approximation of a local Hessian, built column-wise from gradient
//! differences, used to seed the quasi-Newton recursion.

use crate::error::Result;
use crate::geometry::mesh::ReferenceMesh;

/// Largest n·b² for which a banded factorization is attempted.
const BAND_BUDGET: f64 = 2e9;

/// Colours nodes so that no two nodes of one colour share a neighbour
/// (neighbours: nodes of a common element).
pub fn distance_two_colouring(mesh: &ReferenceMesh) -> Vec<usize> {
    let n = mesh.n_nodes();
    let adjacency = node_adjacency(mesh);
    let mut colour = vec![usize::MAX; n];
    let mut used = Vec::new();
    for a in 0..n {
        used.clear();
        for &b in &adjacency[a] {
            for &c in &adjacency[b] {
                if colour[c] != usize::MAX {
                    used.push(colour[c]);
                }
            }
        }
        colour[a] = (0..).find(|k| !used.contains(k)).unwrap();
    }
    colour
}

/// Sorted neighbours of every node, including the node itself.
pub fn node_adjacency(mesh: &ReferenceMesh) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); mesh.n_nodes()];
    for e in 0..mesh.n_elements() {
        let nodes = mesh.element_nodes(e);
        for &a in nodes {
            adj[a].extend_from_slice(nodes);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

/// Symmetric positive definite banded matrix in lower-band storage, factored
/// in place as L·Lᵀ.
#[derive(Clone, Debug)]
pub struct BandedCholesky {
    n: usize,
    band: usize,
    /// Row r holds columns r − band ..= r.
    lower: Vec<f64>,
}

impl BandedCholesky {
    fn zeros(n: usize, band: usize) -> Self {
        Self {
            n,
            band,
            lower: vec![0.0; n * (band + 1)],
        }
    }

    fn idx(&self, r: usize, c: usize) -> usize {
        r * (self.band + 1) + (c + self.band - r)
    }

    fn get(&self, r: usize, c: usize) -> f64 {
        if c > r || r - c > self.band {
            0.0
        } else {
            self.lower[self.idx(r, c)]
        }
    }

    /// Factors in place; false on a non-positive pivot.
    fn factor(&mut self) -> bool {
        let b = self.band;
        for j in 0..self.n {
            let lo = j.saturating_sub(b);
            let mut d = self.get(j, j);
            for k in lo..j {
                let l = self.get(j, k);
                d -= l * l;
            }
            if !(d > 0.0) {
                return false;
            }
            let d = d.sqrt();
            let jj = self.idx(j, j);
            self.lower[jj] = d;
            for i in j + 1..(j + b + 1).min(self.n) {
                let lo_i = i.saturating_sub(b).max(lo);
                let mut v = self.get(i, j);
                for k in lo_i..j {
                    v -= self.get(i, k) * self.get(j, k);
                }
                let ij = self.idx(i, j);
                self.lower[ij] = v / d;
            }
        }
        true
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = self.band;
        let mut x = rhs.to_vec();
        for i in 0..self.n {
            let mut v = x[i];
            for k in i.saturating_sub(b)..i {
                v -= self.get(i, k) * x[k];
            }
            x[i] = v / self.get(i, i);
        }
        for i in (0..self.n).rev() {
            let mut v = x[i];
            for k in i + 1..(i + b + 1).min(self.n) {
                v -= self.get(k, i) * x[k];
            }
            x[i] = v / self.get(i, i);
        }
        x
    }
}

/// Seed inverse Hessian for the y block.
#[derive(Clone, Debug)]
pub enum Preconditioner {
    Banded(BandedCholesky),
    Diagonal(Vec<f64>),
}

impl Preconditioner {
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        match self {
            Self::Banded(c) => c.solve(g),
            Self::Diagonal(d) => g.iter().zip(d).map(|(v, d)| v / d).collect(),
        }
    }
}

/// Builds the preconditioner from the y-gradient map `grad` at `y0`
/// (Dirichlet-masked dofs get identity rows). Columns of one colour and
/// component are probed with a single gradient difference. Indefinite parts
/// are handled by a growing diagonal shift.
pub fn y_hessian_preconditioner(
    mesh: &ReferenceMesh,
    y0: &[f64],
    g0: &[f64],
    grad: impl Fn(&[f64]) -> Result<Vec<f64>>,
) -> Result<Preconditioner> {
    let dim = mesh.dim();
    let n_nodes = mesh.n_nodes();
    let n = n_nodes * dim;
    let adjacency = node_adjacency(mesh);
    let colour = distance_two_colouring(mesh);
    let n_colours = colour.iter().max().map_or(0, |c| c + 1);
    let free = |a: usize| !mesh.is_dirichlet(a);
    let h = mesh.spacing()[..dim].iter().cloned().fold(f64::INFINITY, f64::min);
    let delta = 1e-7 * h;

    let mut band = 0;
    for (a, list) in adjacency.iter().enumerate() {
        for &b in list {
            band = band.max(a.abs_diff(b) * dim + dim - 1);
        }
    }
    let banded = (n as f64) * (band as f64).powi(2) <= BAND_BUDGET;
    let mut matrix = BandedCholesky::zeros(n, if banded { band } else { 0 });
    let mut diag = vec![0.0; n];

    for c in 0..n_colours {
        for i in 0..dim {
            let mut y = y0.to_vec();
            let mut any = false;
            for a in 0..n_nodes {
                if colour[a] == c && free(a) {
                    y[a * dim + i] += delta;
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let g = grad(&y)?;
            for b in 0..n_nodes {
                if !free(b) {
                    continue;
                }
                let Some(&a) = adjacency[b].iter().find(|&&a| colour[a] == c && free(a)) else {
                    continue;
                };
                for j in 0..dim {
                    let r = b * dim + j;
                    let col = a * dim + i;
                    let v = (g[r] - g0[r]) / delta;
                    if r == col {
                        diag[r] = v;
                    }
                    if banded && col <= r {
                        let k = matrix.idx(r, col);
                        matrix.lower[k] += 0.5 * v;
                    }
                    if banded && col >= r {
                        let k = matrix.idx(col, r);
                        matrix.lower[k] += 0.5 * v;
                    }
                }
            }
        }
    }
    let scale = diag.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for a in 0..n_nodes {
        if !free(a) {
            for j in 0..dim {
                diag[a * dim + j] = scale;
                if banded {
                    let k = matrix.idx(a * dim + j, a * dim + j);
                    matrix.lower[k] = scale;
                }
            }
        }
    }
    if banded {
        let mut shift = 0.0;
        for _ in 0..12 {
            let mut trial = matrix.clone();
            for r in 0..n {
                let k = trial.idx(r, r);
                trial.lower[k] += shift;
            }
            if trial.factor() {
                return Ok(Preconditioner::Banded(trial));
            }
            shift = if shift == 0.0 { 1e-6 * scale } else { shift * 10.0 };
        }
    }
    let floor = 1e-6 * scale;
    Ok(Preconditioner::Diagonal(diag.into_iter().map(|d| d.max(floor)).collect()))
}
