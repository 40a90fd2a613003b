//! CSV energy/audit trace.

use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::evolution::{AuditReport, Trajectory};

pub const TRACE_COLUMNS: [&str; 16] = [
    "step",
    "t",
    "E_total",
    "E_elastic",
    "E_exchange",
    "E_magnetostatic",
    "E_load",
    "E_penalty",
    "D_step",
    "Var_cum",
    "dtE_integral",
    "upper_gap",
    "stability_residual",
    "det_residual_max",
    "cn_residual",
    "bv_cum",
];

/// One parsed trace row, in column order after `step`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub values: [f64; 15],
}

impl TraceRow {
    pub fn get(&self, column: &str) -> f64 {
        let k = TRACE_COLUMNS.iter().position(|c| *c == column).expect("known column");
        assert!(k > 0, "step is an integer column");
        self.values[k - 1]
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => invalid(format!("{}: {other:?}", path.display())),
    }
}

/// Writes one row per recorded step (17 significant digits, LF endings).
/// The report is only consulted for its length, which must match.
pub fn write_trace(trajectory: &Trajectory, report: &AuditReport, path: &Path) -> Result<()> {
    if report.stability.len() != trajectory.records.len() {
        return Err(invalid("audit report and trajectory have different lengths"));
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(TRACE_COLUMNS).map_err(|e| csv_error(path, e))?;
    for r in &trajectory.records {
        let l = &r.ledger;
        let mut row = vec![r.step.to_string()];
        row.extend(
            [
                r.t,
                l.total,
                l.elastic,
                l.exchange,
                l.magnetostatic,
                l.load,
                l.penalty,
                r.dissipation,
                r.var_cum,
                r.dte_integral,
                r.upper_gap,
                r.stability_residual,
                r.det_residual,
                r.cn_residual,
                r.bv_cum,
            ]
            .into_iter()
            .map(fmt),
        );
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::ReaderBuilder::new().from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(invalid(format!("{}: unexpected header {:?}", path.display(), header)));
    }
    let mut rows = Vec::new();
    for (i, record) in r.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let step = record[0]
            .parse()
            .map_err(|_| invalid(format!("{}: line {line}: bad step {:?}", path.display(), &record[0])))?;
        let mut values = [0.0; 15];
        for (k, v) in values.iter_mut().enumerate() {
            *v = record[k + 1].parse().map_err(|_| {
                invalid(format!("{}: line {line}: bad {} {:?}", path.display(), TRACE_COLUMNS[k + 1], &record[k + 1]))
            })?;
        }
        rows.push(TraceRow { step, values });
    }
    Ok(rows)
}

/// Tolerances for [`check_trace`].
#[derive(Clone, Copy, Debug)]
pub struct TraceLimits {
    pub tol_stab: f64,
    pub tol_bal: f64,
    pub tol_incomp: f64,
    pub cn: f64,
}

/// Re-checks a saved trace: stability and upper energy estimate against
/// their relative tolerances, constraint residuals, and the Var and BV
/// bookkeeping. Returns one message per violation.
pub fn check_trace(rows: &[TraceRow], limits: &TraceLimits) -> Vec<String> {
    let mut out = Vec::new();
    let mut var = 0.0;
    let mut bv = 0.0;
    for (k, row) in rows.iter().enumerate() {
        let step = row.step;
        if step != k {
            out.push(format!("row {k}: step column reads {step}"));
        }
        let scale = 1.0 + row.get("E_total").abs();
        let s = row.get("stability_residual");
        if s < -limits.tol_stab * scale {
            out.push(format!("step {step}: stability residual {s:.3e}"));
        }
        let g = row.get("upper_gap");
        if g > limits.tol_bal * scale {
            out.push(format!("step {step}: upper energy estimate violated by {g:.3e}"));
        }
        let d = row.get("det_residual_max");
        if d > limits.tol_incomp {
            out.push(format!("step {step}: max |det∇y − 1| = {d:.3e}"));
        }
        let c = row.get("cn_residual");
        if c > limits.cn {
            out.push(format!("step {step}: Ciarlet–Nečas residual {c:.3e}"));
        }
        let dk = row.get("D_step");
        if dk < 0.0 {
            out.push(format!("step {step}: negative dissipation {dk:.3e}"));
        }
        var += dk;
        let v = row.get("Var_cum");
        if (v - var).abs() > 1e-12 * (1.0 + var.abs()) {
            out.push(format!("step {step}: Var_cum {v:.16e} differs from the sum of D_step {var:.16e}"));
        }
        let b = row.get("bv_cum");
        if b < bv {
            out.push(format!("step {step}: bv_cum decreased"));
        }
        bv = b;
        if row.values.iter().enumerate().any(|(i, v)| !v.is_finite() && TRACE_COLUMNS[i + 1] != "stability_residual") {
            out.push(format!("step {step}: non-finite entry"));
        }
    }
    out
}
