//! Time stepping over a partition with per-step audits.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::geometry::fields::{determinant_stats, State};
use crate::geometry::injectivity::{ciarlet_necas_residual, default_probe};
use crate::material::energy::time_derivative_integral;

use super::audit::{deformation_norm, deformed_exchange_integral, sample_competitors, stability_audit, AuditConfig};
use super::dissipation::l1_distance;
use super::step::{incremental_step, restart_step, Candidate, Evaluated, Problem, StepOutcome};
use super::trajectory::{AuditReport, StepRecord, Trajectory};

#[derive(Clone, Debug)]
pub struct EvolutionConfig {
    /// Partition t₀ < t₁ < … < t_N.
    pub times: Vec<f64>,
    pub audit: AuditConfig,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub trajectory: Trajectory,
    pub report: AuditReport,
}

/// A run that stopped early; `partial` holds every accepted step.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Box<Evolution>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (after {} accepted states)",
            self.error,
            self.partial.trajectory.len()
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Step that may be audited: first, last and every stride-th.
fn audited(k: usize, n: usize, stride: usize) -> bool {
    k == 0 || k == n || k % stride == 0
}

struct Runner<'p, 'a> {
    problem: &'p Problem<'a>,
    config: &'p EvolutionConfig,
    trajectory: Trajectory,
    strays: Vec<Option<crate::magnetostatics::StrayFieldSolution>>,
    kappa: f64,
}

impl Runner<'_, '_> {
    fn tol_stab(&self, energy: f64) -> f64 {
        self.config.audit.tol_stab * (1.0 + energy.abs())
    }

    fn earlier(&self) -> Vec<(usize, &State)> {
        let n = self.trajectory.states.len();
        let mut picks: Vec<usize> = Vec::new();
        for k in [n.wrapping_sub(1), n.wrapping_sub(2), 0] {
            if k < n && !picks.contains(&k) {
                picks.push(k);
            }
        }
        picks.into_iter().map(|k| (k, &self.trajectory.states[k])).collect()
    }

    /// Audits `outcome` at t and restarts from violating competitors.
    fn audit_and_restart(&self, step: usize, t: f64, previous: Option<&State>, mut outcome: StepOutcome) -> Result<(StepOutcome, f64, usize)> {
        let n = self.config.times.len() - 1;
        if !audited(step, n, self.config.audit.stride) || self.config.audit.competitors == 0 {
            return Ok((outcome, f64::NAN, 0));
        }
        let mut restarts = 0;
        loop {
            let competitors = sample_competitors(
                self.problem.mesh,
                &outcome.state,
                &self.earlier(),
                self.config.audit.competitors,
                self.config.seed,
                step,
            );
            let result = stability_audit(
                self.problem,
                t,
                &outcome.state,
                outcome.energy.ledger.total,
                outcome.energy.stray.as_ref(),
                outcome.kappa,
                &competitors,
            )?;
            let residual = result.residual;
            let violated = residual < -self.tol_stab(outcome.energy.ledger.total);
            if !violated || restarts >= self.config.audit.max_restarts {
                return Ok((outcome, residual, restarts));
            }
            let start = &competitors[result.worst.expect("a violation has a competitor")].state;
            restarts += 1;
            let better = match previous {
                Some(prev) => restart_step(self.problem, t, prev, &outcome, start)?,
                None => {
                    let (state, diagnostics) = self.problem.relax(t, start, None, outcome.kappa)?;
                    let energy = self.problem.energy(t, &state, diagnostics.kappa, outcome.energy.stray.as_ref())?;
                    (energy.ledger.total < outcome.energy.ledger.total).then(|| StepOutcome {
                        state,
                        dissipation: 0.0,
                        kappa: diagnostics.kappa,
                        previous_energy: energy.ledger.total,
                        energy,
                        candidate: Candidate::Initial,
                        diagnostics,
                    })
                }
            };
            match better {
                Some(b) => outcome = b,
                None => return Ok((outcome, residual, restarts)),
            }
        }
    }

    fn record(&mut self, step: usize, outcome: StepOutcome, stability: f64, restarts: usize) -> Result<()> {
        let problem = self.problem;
        let mesh = problem.mesh;
        let t = self.config.times[step];
        let q = &outcome.state;
        let det = determinant_stats(mesh, &q.y);
        let probe = default_probe(mesh, &q.y, self.config.audit.probe_cells)?;
        let cn = ciarlet_necas_residual(mesh, &q.y, &probe)?;
        let ledger = outcome.energy.ledger;
        let (dte, dte_new, previous_total, var_cum, bv_cum) = match step {
            0 => (0.0, 0.0, ledger.total, 0.0, 0.0),
            _ => {
                let prev_state = &self.trajectory.states[step - 1];
                let prev_record = &self.trajectory.records[step - 1];
                let t0 = self.config.times[step - 1];
                let dte = time_derivative_integral(t0, t, mesh, prev_state, problem.loads)?;
                let dte_new = time_derivative_integral(t0, t, mesh, q, problem.loads)?;
                let previous_total = if outcome.kappa == prev_record.kappa {
                    prev_record.ledger.total
                } else {
                    let e_ms = prev_record.ledger.magnetostatic;
                    problem.model().total_energy(t0, prev_state, e_ms, outcome.kappa)?.total
                };
                let l1 = l1_distance(mesh, &q.m, &prev_state.m)?;
                (
                    dte,
                    dte_new,
                    previous_total,
                    prev_record.var_cum + outcome.dissipation,
                    prev_record.bv_cum + l1,
                )
            }
        };
        let jump = ledger.total + outcome.dissipation - previous_total;
        let record = StepRecord {
            step,
            t,
            kappa: outcome.kappa,
            ledger,
            dissipation: outcome.dissipation,
            var_cum,
            dte_integral: dte,
            dte_integral_new: dte_new,
            previous_total,
            upper_gap: if step == 0 { 0.0 } else { jump - dte },
            lower_gap: if step == 0 { 0.0 } else { jump - dte_new },
            certificate_gap: if step == 0 { 0.0 } else { outcome.certificate_gap() },
            stability_residual: stability,
            det_residual: det.incompressibility_residual,
            cn_residual: cn,
            bv_cum,
            deformation_norm: deformation_norm(mesh, &q.y, problem.params.p),
            exchange_integral: deformed_exchange_integral(mesh, q, problem.solver.det_floor)?,
            max_m: q.m.max_norm(),
            saturation_defect: q.m.saturation_defect(),
            candidate: outcome.candidate,
            restarts,
            outer_iterations: outcome.diagnostics.outer_iterations,
            inner_iterations: outcome.diagnostics.inner_iterations,
            gradient_norm: outcome.diagnostics.gradient_norm,
        };
        self.kappa = outcome.kappa;
        self.trajectory.states.push(outcome.state);
        self.strays.push(outcome.energy.stray);
        self.trajectory.records.push(record);
        Ok(())
    }

    fn initial(&mut self, guess: &State) -> Result<()> {
        let t0 = self.config.times[0];
        let (state, diagnostics) = self.problem.relax(t0, guess, None, self.problem.solver.kappa)?;
        let energy: Evaluated = self.problem.energy(t0, &state, diagnostics.kappa, None)?;
        let outcome = StepOutcome {
            state,
            dissipation: 0.0,
            kappa: diagnostics.kappa,
            previous_energy: energy.ledger.total,
            energy,
            candidate: Candidate::Initial,
            diagnostics,
        };
        let (outcome, residual, restarts) = self.audit_and_restart(0, t0, None, outcome)?;
        let tolerance = self.tol_stab(outcome.energy.ledger.total);
        if residual < -tolerance {
            return Err(Error::UnstableInitialState { residual, tolerance });
        }
        self.record(0, outcome, residual, restarts)
    }

    fn step(&mut self, k: usize) -> Result<()> {
        let t = self.config.times[k];
        let previous = self.trajectory.states[k - 1].clone();
        let outcome = incremental_step(self.problem, t, &previous, self.strays[k - 1].as_ref(), self.kappa)?;
        let (outcome, residual, restarts) = self.audit_and_restart(k, t, Some(&previous), outcome)?;
        self.record(k, outcome, residual, restarts)
    }

    fn finish(self) -> Evolution {
        let report = AuditReport::from_records(
            &self.trajectory.records,
            self.config.audit.tol_stab,
            self.config.audit.tol_bal,
        );
        Evolution {
            trajectory: self.trajectory,
            report,
        }
    }
}

fn validate(problem: &Problem, initial: &State, config: &EvolutionConfig) -> Result<()> {
    if config.times.len() < 2 {
        return Err(invalid("time partition needs at least two points"));
    }
    if config.times.windows(2).any(|w| !(w[1] > w[0])) || config.times.iter().any(|t| !t.is_finite()) {
        return Err(invalid("time partition must be finite and strictly increasing"));
    }
    config.audit.validate()?;
    problem.solver.validate()?;
    initial.check_mesh(problem.mesh)
}

/// Relaxes the initial guess at t₀ (and checks its sampled stability), then
/// takes one incremental step per partition interval, auditing as it goes.
pub fn run_evolution(problem: &Problem, initial: &State, config: &EvolutionConfig) -> std::result::Result<Evolution, RunFailure> {
    let mut runner = Runner {
        problem,
        config,
        trajectory: Trajectory {
            times: config.times.clone(),
            ..Default::default()
        },
        strays: Vec::new(),
        kappa: problem.solver.kappa,
    };
    let outcome = validate(problem, initial, config).and_then(|_| runner.initial(initial));
    if let Err(error) = outcome {
        return Err(RunFailure {
            error,
            partial: Box::new(runner.finish()),
        });
    }
    for k in 1..config.times.len() {
        if let Err(error) = runner.step(k) {
            let error = Error::StepRejected {
                step: k,
                t: config.times[k],
                source: Box::new(error),
            };
            return Err(RunFailure {
                error,
                partial: Box::new(runner.finish()),
            });
        }
    }
    Ok(runner.finish())
}

/// Uniform partition of [t0, t1] into n steps.
pub fn uniform_partition(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
}
