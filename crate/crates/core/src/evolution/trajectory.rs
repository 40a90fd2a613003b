use serde::Serialize;

use crate::error::{invalid, Result};
use crate::geometry::fields::State;
use crate::material::energy::EnergyLedger;

use super::step::Candidate;

/// Ledger row of one time step (row 0 is the relaxed initial state).
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub kappa: f64,
    #[serde(skip)]
    pub ledger: EnergyLedger,
    /// 𝒟(q_k, q_{k−1}).
    pub dissipation: f64,
    pub var_cum: f64,
    /// ∫_{t_{k−1}}^{t_k} ∂_t𝓔(θ, q_{k−1}) dθ.
    pub dte_integral: f64,
    /// Same integral along q_k.
    pub dte_integral_new: f64,
    /// 𝓔(t_{k−1}, q_{k−1}) at this step's κ.
    pub previous_total: f64,
    /// 𝓔(t_k, q_k) + 𝒟 − 𝓔(t_{k−1}, q_{k−1}) − dte_integral; the discrete
    /// upper energy estimate holds when this is ≤ tol_bal.
    pub upper_gap: f64,
    /// Same with dte_integral_new; the lower estimate holds when ≥ −tol_bal.
    pub lower_gap: f64,
    /// 𝓔(t_k, q_k) + 𝒟 − 𝓔(t_k, q_{k−1}).
    pub certificate_gap: f64,
    /// NaN on steps that were not audited.
    pub stability_residual: f64,
    pub det_residual: f64,
    pub cn_residual: f64,
    /// Σ ∫|M_k − M_{k−1}|.
    pub bv_cum: f64,
    pub deformation_norm: f64,
    pub exchange_integral: f64,
    pub max_m: f64,
    /// max ||M| − 1| over nodes.
    pub saturation_defect: f64,
    pub candidate: Candidate,
    pub restarts: usize,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub gradient_norm: f64,
}

/// States on the partition with their ledger.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> Option<&State> {
        self.states.last()
    }

    /// Right-continuous piecewise-constant interpolant: q_k on [t_k, t_{k+1}).
    pub fn state_at(&self, t: f64) -> Result<&State> {
        self.check_time(t)?;
        let k = self.times[..self.states.len()].partition_point(|tk| *tk <= t);
        Ok(&self.states[k.saturating_sub(1)])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (Some(first), Some(last)) = (self.times.first(), self.times[..self.states.len()].last()) else {
            return Err(invalid("empty trajectory"));
        };
        if !(t >= *first && t <= *last) {
            return Err(invalid(format!("time {t} outside the computed range [{first}, {last}]")));
        }
        Ok(())
    }

    /// Var(s, t): sum of step dissipations at partition times in (s, t]. For
    /// the piecewise-constant interpolant no finer partition gives more.
    pub fn variation(&self, s: f64, t: f64) -> Result<f64> {
        self.check_time(s)?;
        self.check_time(t)?;
        if s > t {
            return Err(invalid(format!("variation needs s ≤ t, got s = {s}, t = {t}")));
        }
        Ok(self
            .records
            .iter()
            .filter(|r| r.t > s && r.t <= t)
            .map(|r| r.dissipation)
            .sum())
    }
}

/// Column view of the audits over a trajectory.
#[derive(Clone, Debug, Default, Serialize)]
pub struct AuditReport {
    pub stability: Vec<f64>,
    pub stability_tolerance: Vec<f64>,
    pub upper_gaps: Vec<f64>,
    pub lower_gaps: Vec<f64>,
    pub balance_tolerance: Vec<f64>,
    /// Σ_{i ≤ k} (dte_integral_i − dte_integral_new_i): the width of the
    /// discrete two-sided energy estimate.
    pub two_sided_cumulative: Vec<f64>,
    pub certificate_gaps: Vec<f64>,
    pub deformation_norm: Vec<f64>,
    pub exchange_integral: Vec<f64>,
    pub max_m: Vec<f64>,
    pub saturation_defect: Vec<f64>,
    pub bv_cum: Vec<f64>,
    pub cn_residual: Vec<f64>,
    pub det_residual: Vec<f64>,
}

/// Tolerances for [`AuditReport::failures`].
#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub tol_incomp: f64,
    pub cn: f64,
    pub saturation: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            tol_incomp: 1e-3,
            cn: 1e-3,
            saturation: 1e-12,
        }
    }
}

impl AuditReport {
    pub fn from_records(records: &[StepRecord], tol_stab: f64, tol_bal: f64) -> Self {
        let mut r = Self::default();
        let mut width = 0.0;
        for rec in records {
            let scale = 1.0 + rec.ledger.total.abs();
            r.stability.push(rec.stability_residual);
            r.stability_tolerance.push(tol_stab * scale);
            r.upper_gaps.push(rec.upper_gap);
            r.lower_gaps.push(rec.lower_gap);
            r.balance_tolerance.push(tol_bal * scale);
            width += rec.dte_integral - rec.dte_integral_new;
            r.two_sided_cumulative.push(width);
            r.certificate_gaps.push(rec.certificate_gap);
            r.deformation_norm.push(rec.deformation_norm);
            r.exchange_integral.push(rec.exchange_integral);
            r.max_m.push(rec.max_m);
            r.saturation_defect.push(rec.saturation_defect);
            r.bv_cum.push(rec.bv_cum);
            r.cn_residual.push(rec.cn_residual);
            r.det_residual.push(rec.det_residual);
        }
        r
    }

    pub fn worst_stability(&self) -> f64 {
        self.stability.iter().cloned().filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min)
    }

    /// Human-readable list of every violated check; empty when all pass.
    pub fn failures(&self, limits: &Limits) -> Vec<String> {
        let mut out = Vec::new();
        for k in 0..self.stability.len() {
            let s = self.stability[k];
            if s < -self.stability_tolerance[k] {
                out.push(format!("step {k}: stability residual {s:.3e} below −{:.3e}", self.stability_tolerance[k]));
            }
            if self.upper_gaps[k] > self.balance_tolerance[k] {
                out.push(format!(
                    "step {k}: upper energy estimate violated by {:.3e}",
                    self.upper_gaps[k]
                ));
            }
            if self.certificate_gaps[k] > self.balance_tolerance[k] {
                out.push(format!(
                    "step {k}: step certificate violated by {:.3e}",
                    self.certificate_gaps[k]
                ));
            }
            if self.det_residual[k] > limits.tol_incomp {
                out.push(format!("step {k}: max |det∇y − 1| = {:.3e}", self.det_residual[k]));
            }
            if self.cn_residual[k] > limits.cn {
                out.push(format!("step {k}: Ciarlet–Nečas residual {:.3e}", self.cn_residual[k]));
            }
            if self.saturation_defect[k] > limits.saturation {
                out.push(format!("step {k}: max ||M| − 1| = {:.3e}", self.saturation_defect[k]));
            }
        }
        out
    }
}
