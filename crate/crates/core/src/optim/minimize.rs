//! Alternating-block quasi-Newton descent with a frozen stray field and an
//! incompressibility continuation loop.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::fields::{determinant_stats, MagnetizationField, State};
use crate::geometry::mesh::ReferenceMesh;
use crate::magnetostatics::{StrayFieldModel, StrayFieldSolution};
use crate::material::energy::{mask_dirichlet, project_tangent, EnergyModel};
use crate::optim::dissipation::smoothed_dissipation;
use crate::optim::lbfgs::Lbfgs;
use crate::optim::precond::y_hessian_preconditioner;
use crate::optim::saturation::retract;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Outer iterations; each runs the y block, then the M block, with a
    /// stray-field re-solve after each.
    pub max_outer: usize,
    /// Iterations per block and round.
    pub max_inner: usize,
    /// Tolerance on the dual (lumped-mass weighted) norm of the projected gradient.
    pub tol_grad: f64,
    /// Stop when an outer iteration lowers the exact objective by less than
    /// tol_decrease·(1 + |value|).
    pub tol_decrease: f64,
    pub backtrack: f64,
    pub armijo: f64,
    pub memory: usize,
    /// Initial incompressibility weight κ.
    pub kappa: f64,
    pub kappa_max: f64,
    pub tol_incomp: f64,
    pub eps_dis: f64,
    pub det_floor: f64,
    /// Curvature of the quadratic upper model of the stray-field energy in
    /// units of 1/μ₀.
    pub stray_majorant: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer: 40,
            max_inner: 60,
            tol_grad: 1e-7,
            tol_decrease: 1e-10,
            backtrack: 0.5,
            armijo: 1e-4,
            memory: 12,
            kappa: 1e3,
            kappa_max: 1e7,
            tol_incomp: 1e-3,
            eps_dis: 1e-4,
            det_floor: crate::geometry::fields::DEFAULT_DET_FLOOR,
            stray_majorant: 1.2,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_grad", self.tol_grad),
            ("tol_decrease", self.tol_decrease),
            ("armijo", self.armijo),
            ("kappa", self.kappa),
            ("kappa_max", self.kappa_max),
            ("tol_incomp", self.tol_incomp),
            ("eps_dis", self.eps_dis),
            ("det_floor", self.det_floor),
            ("stray_majorant", self.stray_majorant),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("solver.{name} must be positive")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(invalid("solver.backtrack must lie in (0, 1)"));
        }
        if self.armijo >= 1.0 {
            return Err(invalid("solver.armijo must be below 1"));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.memory == 0 {
            return Err(invalid("solver iteration counts and memory must be positive"));
        }
        if self.kappa_max < self.kappa {
            return Err(invalid("solver.kappa_max must be at least solver.kappa"));
        }
        Ok(())
    }
}

/// Value and raw (unmasked, unprojected) nodal gradients.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: f64,
    pub grad_y: Vec<f64>,
    pub grad_m: Vec<f64>,
}

/// An objective that can be replaced locally by a cheaper model.
pub trait Objective {
    fn mesh(&self) -> &ReferenceMesh;
    /// Rebuilds the local model around `q` and returns the exact value there.
    /// The model must agree with the exact objective in value at `q`.
    fn anchor(&mut self, q: &State, kappa: f64) -> Result<f64>;
    /// Local model value and gradients.
    fn evaluate(&self, q: &State, kappa: f64) -> Result<Evaluation>;
}

/// 𝓔(t, ·) + 𝒟_ε(·, M_prev), with the stray-field energy replaced between
/// re-solves by E₀ + g_y·(y − y₀) + g·δ + (c/2μ₀)Σ_a V_a|δ_a|², δ = M − M₀.
pub struct IncrementalObjective<'a> {
    pub model: EnergyModel<'a>,
    pub stray: Option<&'a StrayFieldModel>,
    pub t: f64,
    /// Dissipation anchor and (H_c, ε).
    pub previous: Option<(&'a MagnetizationField, f64, f64)>,
    pub stray_majorant: f64,
    frozen: Option<Frozen>,
}

struct Frozen {
    y0: Vec<f64>,
    m0: Vec<f64>,
    energy: f64,
    sensitivity_y: Vec<f64>,
    sensitivity: Vec<f64>,
    solution: StrayFieldSolution,
}

impl<'a> IncrementalObjective<'a> {
    pub fn new(
        model: EnergyModel<'a>,
        stray: Option<&'a StrayFieldModel>,
        t: f64,
        previous: Option<(&'a MagnetizationField, f64, f64)>,
        stray_majorant: f64,
    ) -> Self {
        Self {
            model,
            stray,
            t,
            previous,
            stray_majorant,
            frozen: None,
        }
    }

    /// Stray-field solution at the current anchor.
    pub fn stray_solution(&self) -> Option<&StrayFieldSolution> {
        self.frozen.as_ref().map(|f| &f.solution)
    }

    /// Stray energy at the current anchor.
    pub fn stray_energy(&self) -> f64 {
        self.frozen.as_ref().map_or(0.0, |f| f.energy)
    }

    fn dissipation(&self, q: &State) -> Result<(f64, Vec<f64>)> {
        match self.previous {
            Some((prev, h_c, eps)) if h_c > 0.0 => smoothed_dissipation(self.model.mesh, &q.m, prev, h_c, eps),
            _ => Ok((0.0, vec![0.0; q.m.values().len()])),
        }
    }
}

impl Objective for IncrementalObjective<'_> {
    fn mesh(&self) -> &ReferenceMesh {
        self.model.mesh
    }

    fn anchor(&mut self, q: &State, kappa: f64) -> Result<f64> {
        if let Some(stray) = self.stray {
            let guess = self.frozen.as_ref().map(|f| &f.solution);
            let eval = stray.evaluate(self.model.mesh, q, guess)?;
            let sensitivity = stray.magnetization_sensitivity(self.model.mesh, &eval)?;
            let sensitivity_y = stray.deformation_sensitivity(self.model.mesh, &q.m, &eval)?;
            self.frozen = Some(Frozen {
                y0: q.y.values().to_vec(),
                m0: q.m.values().to_vec(),
                energy: eval.energy,
                sensitivity_y,
                sensitivity,
                solution: eval.solution,
            });
        }
        Ok(self.evaluate(q, kappa)?.value)
    }

    fn evaluate(&self, q: &State, kappa: f64) -> Result<Evaluation> {
        let (mut value, mut grad_y, mut grad_m) = self.model.raw_gradient(self.t, q, kappa, None)?;
        if let (Some(stray), Some(frozen)) = (self.stray, &self.frozen) {
            let c = self.stray_majorant / stray.poisson().mu0();
            let dim = self.model.mesh.dim();
            value += frozen.energy;
            for (i, ((y, y0), s)) in q.y.values().iter().zip(&frozen.y0).zip(&frozen.sensitivity_y).enumerate() {
                value += s * (y - y0);
                grad_y[i] += s;
            }
            for (i, ((m, m0), s)) in q.m.values().iter().zip(&frozen.m0).zip(&frozen.sensitivity).enumerate() {
                let w = self.model.mesh.node_volume()[i / dim];
                let d = m - m0;
                value += s * d + 0.5 * c * w * d * d;
                grad_m[i] += s + c * w * d;
            }
        }
        let (dis, dis_grad) = self.dissipation(q)?;
        value += dis;
        for (g, d) in grad_m.iter_mut().zip(&dis_grad) {
            *g += d;
        }
        Ok(Evaluation { value, grad_y, grad_m })
    }
}

/// Outcome of a minimization.
#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub gradient_norm: f64,
    pub gradient_norm_y: f64,
    pub gradient_norm_m: f64,
    pub kappa: f64,
    pub converged: bool,
    /// Exact objective at every accepted anchor; non-increasing.
    pub history: Vec<f64>,
    pub incompressibility_residual: f64,
    pub line_search_failures: usize,
}

/// √(Σ g_i² / V_node(i)), the dual norm for the lumped L² metric.
pub fn weighted_norm(mesh: &ReferenceMesh, g: &[f64]) -> f64 {
    let dim = mesh.dim();
    g.iter()
        .enumerate()
        .map(|(i, v)| v * v / mesh.node_volume()[i / dim])
        .sum::<f64>()
        .sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::DegenerateDeformation { .. } | Error::DegenerateMagnetization { .. }
    )
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Block {
    Y,
    M,
}

struct BlockOutcome {
    iterations: usize,
    /// The first line search failed.
    stalled: bool,
}

fn block_gradient(mesh: &ReferenceMesh, block: Block, q: &State, f: &Evaluation) -> Vec<f64> {
    match block {
        Block::Y => {
            let mut g = f.grad_y.clone();
            mask_dirichlet(mesh, &mut g);
            g
        }
        Block::M => {
            let mut g = f.grad_m.clone();
            project_tangent(mesh.dim(), q.m.values(), &mut g);
            g
        }
    }
}

fn max_nodal(dim: usize, v: &[f64]) -> f64 {
    v.chunks_exact(dim)
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

fn trial_state(q: &State, block: Block, d: &[f64], alpha: f64) -> Result<State> {
    let mut t = q.clone();
    match block {
        Block::Y => {
            for (v, di) in t.y.values_mut().iter_mut().zip(d) {
                *v += alpha * di;
            }
        }
        Block::M => t.m = retract(&q.m, d, alpha)?,
    }
    Ok(t)
}

/// L-BFGS on one block with Armijo backtracking. Trials that leave the
/// admissible set (det ≤ det_floor, degenerate M) are rejected like failed
/// decrease tests.
fn descend_block<O: Objective>(
    obj: &O,
    q: &mut State,
    f: &mut Evaluation,
    block: Block,
    kappa: f64,
    opts: &SolverOptions,
) -> Result<BlockOutcome> {
    let mesh = obj.mesh();
    let dim = mesh.dim();
    let h_min = mesh.spacing()[..dim].iter().cloned().fold(f64::INFINITY, f64::min);
    // Largest nodal move per iteration: a fraction of an element for y, an
    // angle for M.
    let cap = match block {
        Block::Y => 0.25 * h_min,
        Block::M => 0.5,
    };
    let mut lbfgs = Lbfgs::new(opts.memory);
    let mut g = block_gradient(mesh, block, q, f);
    let mut gnorm = weighted_norm(mesh, &g);
    let mut iterations = 0;
    let mut stalled = false;
    let inv_volume: Vec<f64> = (0..g.len()).map(|i| 1.0 / mesh.node_volume()[i / dim]).collect();
    let precond = match block {
        Block::Y if gnorm > opts.tol_grad => {
            let base = q.clone();
            Some(y_hessian_preconditioner(mesh, q.y.values(), &f.grad_y, |y| {
                let mut t = base.clone();
                t.y.values_mut().copy_from_slice(y);
                Ok(obj.evaluate(&t, kappa)?.grad_y)
            })?)
        }
        _ => None,
    };
    let seed = |lbfgs: &Lbfgs, v: &[f64]| -> Vec<f64> {
        match &precond {
            Some(p) => p.apply(v),
            None => {
                // Lumped-metric steepest descent, scaled by the latest pair.
                let gamma = lbfgs.last().map_or(1.0, |(s, y)| {
                    let sy: f64 = dot(s, y);
                    let ydy: f64 = y.iter().zip(&inv_volume).map(|(a, w)| a * a * w).sum();
                    if sy > 0.0 && ydy > 0.0 {
                        sy / ydy
                    } else {
                        1.0
                    }
                });
                v.iter().zip(&inv_volume).map(|(a, w)| gamma * a * w).collect()
            }
        }
    };
    while iterations < opts.max_inner && gnorm > opts.tol_grad {
        let mut d: Vec<f64> = lbfgs.apply_with(&g, |v| seed(&lbfgs, v)).iter().map(|v| -v).collect();
        match block {
            Block::Y => mask_dirichlet(mesh, &mut d),
            Block::M => project_tangent(dim, q.m.values(), &mut d),
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            lbfgs.clear();
            d = seed(&lbfgs, &g).iter().map(|v| -v).collect();
            match block {
                Block::Y => mask_dirichlet(mesh, &mut d),
                Block::M => project_tangent(dim, q.m.values(), &mut d),
            }
            slope = dot(&g, &d);
        }
        let mut alpha = 1.0;
        let longest = max_nodal(dim, &d);
        if longest * alpha > cap {
            alpha = cap / longest;
        }
        let mut accepted = None;
        for _ in 0..60 {
            match trial_state(q, block, &d, alpha).and_then(|t| obj.evaluate(&t, kappa).map(|e| (t, e))) {
                Ok((t, e)) if e.value <= f.value + opts.armijo * alpha * slope => {
                    accepted = Some((t, e));
                    break;
                }
                Ok(_) => {}
                Err(e) if is_degenerate(&e) => {}
                Err(e) => return Err(e),
            }
            alpha *= opts.backtrack;
        }
        let Some((t, e)) = accepted else {
            stalled = iterations == 0;
            break;
        };
        let g_new = block_gradient(mesh, block, &t, &e);
        let s: Vec<f64> = match block {
            Block::Y => t.y.values().iter().zip(q.y.values()).map(|(a, b)| a - b).collect(),
            Block::M => {
                let mut s: Vec<f64> = t.m.values().iter().zip(q.m.values()).map(|(a, b)| a - b).collect();
                project_tangent(dim, t.m.values(), &mut s);
                s
            }
        };
        let mut g_old = g.clone();
        if block == Block::M {
            project_tangent(dim, t.m.values(), &mut g_old);
        }
        let yv: Vec<f64> = g_new.iter().zip(&g_old).map(|(a, b)| a - b).collect();
        lbfgs.push(s, yv);
        let decrease = f.value - e.value;
        *q = t;
        *f = e;
        g = g_new;
        gnorm = weighted_norm(mesh, &g);
        iterations += 1;
        if decrease <= 1e-15 * (1.0 + f.value.abs()) {
            break;
        }
    }
    Ok(BlockOutcome {
        iterations,
        stalled,
    })
}

fn total_gradient_norm(mesh: &ReferenceMesh, q: &State, f: &Evaluation) -> f64 {
    let gy = weighted_norm(mesh, &block_gradient(mesh, Block::Y, q, f));
    let gm = weighted_norm(mesh, &block_gradient(mesh, Block::M, q, f));
    (gy * gy + gm * gm).sqrt()
}

fn check_feasible(mesh: &ReferenceMesh, q: &State, det_floor: f64) -> Result<()> {
    q.check_mesh(mesh)?;
    crate::geometry::fields::check_det_floor(mesh, &q.y, det_floor)?;
    let defect = q.m.saturation_defect();
    if defect > 1e-10 {
        return Err(invalid(format!("initial magnetization is not saturated (max ||M| − 1| = {defect:.3e})")));
    }
    Ok(())
}

/// Descent at fixed κ. Returns the final state; the objective is anchored
/// there on return.
fn descend<O: Objective>(
    obj: &mut O,
    q0: &State,
    kappa: f64,
    opts: &SolverOptions,
    diag: &mut Diagnostics,
) -> Result<State> {
    let q = descend_anchored(obj, q0, kappa, opts, diag)?;
    let f = obj.evaluate(&q, kappa)?;
    diag.gradient_norm_y = weighted_norm(obj.mesh(), &block_gradient(obj.mesh(), Block::Y, &q, &f));
    diag.gradient_norm_m = weighted_norm(obj.mesh(), &block_gradient(obj.mesh(), Block::M, &q, &f));
    diag.gradient_norm = diag.gradient_norm_y.hypot(diag.gradient_norm_m);
    diag.converged = diag.gradient_norm <= opts.tol_grad;
    Ok(q)
}

fn descend_anchored<O: Objective>(
    obj: &mut O,
    q0: &State,
    kappa: f64,
    opts: &SolverOptions,
    diag: &mut Diagnostics,
) -> Result<State> {
    let mut q = q0.clone();
    let mut best = obj.anchor(&q, kappa)?;
    diag.history.push(best);
    for outer in 0..opts.max_outer {
        diag.outer_iterations += 1;
        let f = obj.evaluate(&q, kappa)?;
        let gnorm = total_gradient_norm(obj.mesh(), &q, &f);
        diag.gradient_norm = gnorm;
        if gnorm <= opts.tol_grad {
            return Ok(q);
        }
        let start = best;
        let mut stalled = true;
        for block in [Block::Y, Block::M] {
            let mut f = obj.evaluate(&q, kappa)?;
            let mut trial = q.clone();
            let out = descend_block(obj, &mut trial, &mut f, block, kappa, opts)?;
            diag.inner_iterations += out.iterations;
            stalled &= out.stalled;
            if out.iterations == 0 {
                continue;
            }
            if let Some((next, value)) = accept_exact(obj, &q, &trial, block, kappa, best)? {
                q = next;
                best = value;
                diag.history.push(best);
            }
        }
        if stalled {
            diag.line_search_failures += 1;
            if outer == 0 && gnorm > 1e3 * opts.tol_grad {
                return Err(Error::LineSearchCollapse {
                    iteration: diag.inner_iterations,
                    gradient_norm: gnorm,
                });
            }
        }
        if start - best <= opts.tol_decrease * (1.0 + best.abs()) {
            return Ok(q);
        }
    }
    Ok(q)
}

/// Re-anchors at `trial` and accepts it if the exact objective did not
/// increase. Otherwise backtracks along the segment from `q` (the local model
/// ignores how y moves the stray field). On rejection the objective is
/// re-anchored at `q`.
fn accept_exact<O: Objective>(
    obj: &mut O,
    q: &State,
    trial: &State,
    block: Block,
    kappa: f64,
    best: f64,
) -> Result<Option<(State, f64)>> {
    let mut s = 1.0;
    for _ in 0..5 {
        let candidate = if s == 1.0 {
            Ok(trial.clone())
        } else {
            blend(q, trial, block, s)
        };
        match candidate.and_then(|c| obj.anchor(&c, kappa).map(|v| (c, v))) {
            Ok((c, v)) if v <= best => return Ok(Some((c, v))),
            Ok(_) => {}
            Err(e) if is_degenerate(&e) => {}
            Err(e) => return Err(e),
        }
        s *= 0.5;
    }
    obj.anchor(q, kappa)?;
    Ok(None)
}

fn blend(q: &State, trial: &State, block: Block, s: f64) -> Result<State> {
    let mut out = q.clone();
    match block {
        Block::Y => {
            for (v, (a, b)) in out.y.values_mut().iter_mut().zip(q.y.values().iter().zip(trial.y.values())) {
                *v = a + s * (b - a);
            }
        }
        Block::M => {
            for (v, (a, b)) in out.m.values_mut().iter_mut().zip(q.m.values().iter().zip(trial.m.values())) {
                *v = a + s * (b - a);
            }
            out.m = crate::optim::saturation::project_saturation(&out.m)?;
        }
    }
    Ok(out)
}

/// Minimizes `obj` from `q0`, raising κ ×10 until max|det∇y − 1| ≤
/// tol_incomp. Every accepted iterate keeps det∇y > det_floor and |M| = 1.
pub fn minimize<O: Objective>(obj: &mut O, q0: &State, opts: &SolverOptions) -> Result<(State, Diagnostics)> {
    minimize_from(obj, q0, opts, opts.kappa)
}

/// As [`minimize`], starting the continuation at `kappa`.
pub fn minimize_from<O: Objective>(
    obj: &mut O,
    q0: &State,
    opts: &SolverOptions,
    kappa: f64,
) -> Result<(State, Diagnostics)> {
    opts.validate()?;
    check_feasible(obj.mesh(), q0, opts.det_floor)?;
    let mut diag = Diagnostics::default();
    let mut kappa = kappa;
    let mut q = q0.clone();
    loop {
        diag.kappa = kappa;
        q = descend(obj, &q, kappa, opts, &mut diag)?;
        let residual = determinant_stats(obj.mesh(), &q.y).incompressibility_residual;
        diag.incompressibility_residual = residual;
        if residual <= opts.tol_incomp {
            return Ok((q, diag));
        }
        if kappa * 10.0 > opts.kappa_max * (1.0 + 1e-12) {
            return Err(Error::Continuation { residual, kappa });
        }
        kappa *= 10.0;
        // Values at a new κ are not comparable with the old history.
        diag.history.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fields::DeformationField;
    use crate::geometry::mesh::BoundarySpec;

    /// ½Σ_a V_a |y_a − target_a|² on free nodes, M frozen.
    struct Quadratic {
        mesh: ReferenceMesh,
        target: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn mesh(&self) -> &ReferenceMesh {
            &self.mesh
        }
        fn anchor(&mut self, q: &State, kappa: f64) -> Result<f64> {
            Ok(self.evaluate(q, kappa)?.value)
        }
        fn evaluate(&self, q: &State, _kappa: f64) -> Result<Evaluation> {
            let dim = self.mesh.dim();
            let mut value = 0.0;
            let mut grad_y = vec![0.0; q.y.values().len()];
            for (i, (y, t)) in q.y.values().iter().zip(&self.target).enumerate() {
                let w = self.mesh.node_volume()[i / dim] * (1.0 + (i % 3) as f64);
                value += 0.5 * w * (y - t) * (y - t);
                grad_y[i] = w * (y - t);
            }
            Ok(Evaluation {
                value,
                grad_y,
                grad_m: vec![0.0; q.m.values().len()],
            })
        }
    }

    #[test]
    fn quadratic_objective_converges_to_its_minimizer() {
        let mesh = ReferenceMesh::new(&[1.0, 1.0], &[4, 4], BoundarySpec::default()).unwrap();
        let target = DeformationField::from_fn(&mesh, |x| [x[0] + 0.02 * x[0] * x[1], x[1] - 0.01 * x[0], 0.0]);
        let mut obj = Quadratic {
            target: target.values().to_vec(),
            mesh: mesh.clone(),
        };
        let q0 = State {
            y: DeformationField::identity(&mesh),
            m: MagnetizationField::uniform(&mesh, &[1.0, 0.0, 0.0]).unwrap(),
        };
        let opts = SolverOptions {
            tol_grad: 1e-10,
            tol_incomp: 1.0,
            ..Default::default()
        };
        let (q, diag) = minimize(&mut obj, &q0, &opts).unwrap();
        assert!(diag.converged, "{diag:?}");
        assert!(diag.gradient_norm <= 1e-10);
        for a in 0..mesh.n_nodes() {
            let expect = if mesh.is_dirichlet(a) { q0.y.node(a) } else { target.node(a) };
            let got = q.y.node(a);
            assert!((got[0] - expect[0]).abs() < 1e-9 && (got[1] - expect[1]).abs() < 1e-9);
        }
        assert!(diag.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn options_are_validated() {
        let mut o = SolverOptions::default();
        assert!(o.validate().is_ok());
        o.backtrack = 1.5;
        assert!(o.validate().is_err());
        let json = r#"{"tol_grad": 1e-6, "bogus": 1}"#;
        assert!(serde_json::from_str::<SolverOptions>(json).is_err());
    }
}
