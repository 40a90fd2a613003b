//! One step of the incremental minimization scheme.

use serde::Serialize;

use crate::error::Result;
use crate::geometry::fields::{MagnetizationField, State};
use crate::geometry::mesh::ReferenceMesh;
use crate::magnetostatics::{StrayFieldModel, StrayFieldSolution};
use crate::material::energy::{EnergyLedger, EnergyModel};
use crate::material::{Loads, MaterialParams};
use crate::optim::{minimize_from, Diagnostics, IncrementalObjective, SolverOptions};

use super::dissipation::dissipation;

/// Nodes whose magnetization moved less than this are candidates for being
/// reset to the previous value (the smoothed dissipation charges small moves
/// quadratically, the true one linearly).
const SNAP_RADIUS: f64 = 1e-3;

/// The reversed start is relaxed when its unrelaxed objective is within this
/// fraction of 1 + |best| of the best local candidate.
const REVERSAL_MARGIN: f64 = 0.1;

/// Everything needed to evaluate 𝓔(t, ·).
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub mesh: &'a ReferenceMesh,
    pub params: &'a MaterialParams,
    pub loads: &'a Loads,
    pub stray: Option<&'a StrayFieldModel>,
    pub solver: &'a SolverOptions,
}

/// 𝓔(t, q) with the stray-field solution it used.
#[derive(Clone, Debug)]
pub struct Evaluated {
    pub ledger: EnergyLedger,
    pub stray: Option<StrayFieldSolution>,
}

impl<'a> Problem<'a> {
    pub fn model(&self) -> EnergyModel<'a> {
        EnergyModel {
            mesh: self.mesh,
            params: self.params,
            loads: self.loads,
            det_floor: self.solver.det_floor,
        }
    }

    /// Exact 𝓔(t, q) at penalty weight κ.
    pub fn energy(&self, t: f64, q: &State, kappa: f64, guess: Option<&StrayFieldSolution>) -> Result<Evaluated> {
        let stray = match self.stray {
            Some(model) => Some(model.evaluate(self.mesh, q, guess)?.solution),
            None => None,
        };
        let e_ms = stray.as_ref().map_or(0.0, |s| s.energy);
        Ok(Evaluated {
            ledger: self.model().total_energy(t, q, e_ms, kappa)?,
            stray,
        })
    }

    pub fn dissipation(&self, a: &MagnetizationField, b: &MagnetizationField) -> Result<f64> {
        dissipation(self.mesh, a, b, self.params.h_c)
    }

    fn objective(&self, t: f64, previous: Option<&'a MagnetizationField>) -> IncrementalObjective<'a> {
        IncrementalObjective::new(
            self.model(),
            self.stray,
            t,
            previous.map(|m| (m, self.params.h_c, self.solver.eps_dis)),
            self.solver.stray_majorant,
        )
    }

    /// Local minimization of 𝓔(t, ·) (plus the smoothed dissipation from
    /// `previous`, if given) starting at `start`.
    pub fn relax(
        &self,
        t: f64,
        start: &State,
        previous: Option<&'a MagnetizationField>,
        kappa: f64,
    ) -> Result<(State, Diagnostics)> {
        let mut obj = self.objective(t, previous);
        minimize_from(&mut obj, start, self.solver, kappa)
    }
}

/// Which candidate a step accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Candidate {
    /// Local minimizer from the warm start.
    Minimizer,
    /// Minimizer with barely moved nodes reset to the previous magnetization.
    Snapped,
    /// Minimizer's deformation with the previous magnetization.
    PreviousMagnetization,
    /// The previous state itself.
    Previous,
    /// Minimizer started from the reversed previous magnetization.
    Reversed,
    /// Minimizer from a competitor that violated the stability audit.
    Restart,
    /// Relaxed initial state.
    Initial,
}

/// An accepted step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: State,
    pub energy: Evaluated,
    /// 𝒟(q_k, q_{k−1}).
    pub dissipation: f64,
    pub kappa: f64,
    /// 𝓔(t_k, q_{k−1}) at the same κ.
    pub previous_energy: f64,
    pub candidate: Candidate,
    pub diagnostics: Diagnostics,
}

impl StepOutcome {
    /// 𝓔(t_k, q_k) + 𝒟(q_k, q_{k−1}) − 𝓔(t_k, q_{k−1}); non-positive by
    /// construction since q_{k−1} is itself a candidate.
    pub fn certificate_gap(&self) -> f64 {
        self.energy.ledger.total + self.dissipation - self.previous_energy
    }

    pub fn objective(&self) -> f64 {
        self.energy.ledger.total + self.dissipation
    }
}

struct Scored {
    state: State,
    energy: Evaluated,
    dissipation: f64,
    candidate: Candidate,
}

impl Scored {
    fn objective(&self) -> f64 {
        self.energy.ledger.total + self.dissipation
    }
}

fn score(
    problem: &Problem,
    t: f64,
    state: State,
    previous: &State,
    kappa: f64,
    guess: Option<&StrayFieldSolution>,
    candidate: Candidate,
) -> Result<Scored> {
    let energy = problem.energy(t, &state, kappa, guess)?;
    let dissipation = problem.dissipation(&state.m, &previous.m)?;
    Ok(Scored {
        state,
        energy,
        dissipation,
        candidate,
    })
}

fn snapped(minimizer: &State, previous: &State) -> Option<State> {
    let dim = minimizer.m.dim();
    let mut out = minimizer.clone();
    let mut changed = false;
    for a in 0..minimizer.m.n_nodes() {
        let m = minimizer.m.node(a);
        let p = previous.m.node(a);
        let d: f64 = (0..dim).map(|i| (m[i] - p[i]).powi(2)).sum::<f64>().sqrt();
        if d > 0.0 && d <= SNAP_RADIUS {
            out.m.set_node(a, &p);
            changed = true;
        }
    }
    changed.then_some(out)
}

/// Minimizes 𝓔(t, ·) + 𝒟(·, q_prev) from the warm start q_prev and returns
/// the best of the minimizer, two cheap variants of it, and q_prev itself,
/// scored with the exact (non-smoothed) dissipation. When the reversed
/// magnetization −M_prev is within reach of the best of these, the
/// minimization is repeated from it as well. Ties keep the earlier candidate.
pub fn incremental_step(
    problem: &Problem,
    t: f64,
    previous: &State,
    previous_stray: Option<&StrayFieldSolution>,
    kappa: f64,
) -> Result<StepOutcome> {
    let (minimizer, mut diagnostics) = problem.relax(t, previous, Some(&previous.m), kappa)?;
    let mut kappa = diagnostics.kappa;
    let mut candidates = Vec::with_capacity(6);
    if let Some(s) = snapped(&minimizer, previous) {
        candidates.push((s, Candidate::Snapped));
    }
    let mut keep_m = minimizer.clone();
    keep_m.m = previous.m.clone();
    if keep_m != minimizer {
        candidates.push((keep_m, Candidate::PreviousMagnetization));
    }
    candidates.push((previous.clone(), Candidate::Previous));
    candidates.insert(0, (minimizer, Candidate::Minimizer));

    let mut scored = candidates
        .into_iter()
        .map(|(state, kind)| score(problem, t, state, previous, kappa, previous_stray, kind))
        .collect::<Result<Vec<_>>>()?;
    let best = scored.iter().map(Scored::objective).fold(f64::INFINITY, f64::min);

    let reversed = State {
        y: previous.y.clone(),
        m: previous.m.negated(),
    };
    let r = score(problem, t, reversed, previous, kappa, previous_stray, Candidate::Reversed)?;
    if r.objective() < best + REVERSAL_MARGIN * (1.0 + best.abs()) {
        let (state, d) = problem.relax(t, &r.state, Some(&previous.m), kappa)?;
        if d.kappa != kappa {
            kappa = d.kappa;
            scored = scored
                .into_iter()
                .map(|s| score(problem, t, s.state, previous, kappa, previous_stray, s.candidate))
                .collect::<Result<Vec<_>>>()?;
        }
        let relaxed = score(problem, t, state, previous, kappa, previous_stray, Candidate::Reversed)?;
        if relaxed.objective() < scored.iter().map(Scored::objective).fold(f64::INFINITY, f64::min) {
            diagnostics = d;
        }
        scored.push(relaxed);
    }

    let previous_energy = scored
        .iter()
        .find(|s| s.candidate == Candidate::Previous)
        .map(|s| s.energy.ledger.total)
        .expect("previous state is always scored");
    let best = scored
        .into_iter()
        .reduce(|best, s| if s.objective() < best.objective() { s } else { best })
        .expect("at least one candidate");
    Ok(StepOutcome {
        state: best.state,
        energy: best.energy,
        dissipation: best.dissipation,
        kappa,
        previous_energy,
        candidate: best.candidate,
        diagnostics,
    })
}

/// Minimizes the same incremental objective from `start`; returns the result
/// if it beats `current` in 𝓔 + 𝒟.
pub fn restart_step(
    problem: &Problem,
    t: f64,
    previous: &State,
    current: &StepOutcome,
    start: &State,
) -> Result<Option<StepOutcome>> {
    let (state, diagnostics) = problem.relax(t, start, Some(&previous.m), current.kappa)?;
    let kappa = diagnostics.kappa;
    let guess = current.energy.stray.as_ref();
    let s = score(problem, t, state, previous, kappa, guess, Candidate::Restart)?;
    let (current_objective, previous_energy) = if kappa == current.kappa {
        (current.objective(), current.previous_energy)
    } else {
        let c = problem.energy(t, &current.state, kappa, guess)?;
        let p = problem.energy(t, previous, kappa, guess)?;
        (c.ledger.total + current.dissipation, p.ledger.total)
    };
    if s.objective() < current_objective {
        Ok(Some(StepOutcome {
            state: s.state,
            energy: s.energy,
            dissipation: s.dissipation,
            kappa,
            previous_energy,
            candidate: Candidate::Restart,
            diagnostics,
        }))
    } else {
        Ok(None)
    }
}
