use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Vector;

/// Spatially uniform vector load, piecewise linear in time between knots.
///
/// An empty list is the zero load; a single knot is a constant load.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoadHistory {
    pub knots: Vec<(f64, Vec<f64>)>,
}

impl LoadHistory {
    pub fn constant(value: &[f64]) -> Self {
        Self {
            knots: vec![(0.0, value.to_vec())],
        }
    }

    pub fn ramp(t0: f64, v0: &[f64], t1: f64, v1: &[f64]) -> Self {
        Self {
            knots: vec![(t0, v0.to_vec()), (t1, v1.to_vec())],
        }
    }

    pub fn validate(&self, name: &str, dim: usize, horizon: f64) -> Result<()> {
        for (t, v) in &self.knots {
            if v.len() != dim {
                return Err(invalid(format!("loads.{name}: value at t = {t} has {} components, expected {dim}", v.len())));
            }
            if !t.is_finite() || v.iter().any(|x| !x.is_finite()) {
                return Err(invalid(format!("loads.{name}: knots must be finite")));
            }
        }
        if self.knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid(format!("loads.{name}: knot times must be strictly increasing")));
        }
        if self.knots.len() >= 2 {
            let (start, end) = (self.knots[0].0, self.knots[self.knots.len() - 1].0);
            if start > 0.0 || end < horizon {
                return Err(invalid(format!(
                    "loads.{name}: knots [{start}, {end}] do not cover [0, {horizon}]"
                )));
            }
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if self.knots.len() >= 2 {
            let (start, end) = (self.knots[0].0, self.knots[self.knots.len() - 1].0);
            let slack = 1e-12 * (1.0 + end.abs());
            if !(t >= start - slack && t <= end + slack) {
                return Err(Error::LoadTime { t, start, end });
            }
        }
        Ok(())
    }

    /// Index i of the interval [t_i, t_{i+1}] used at time t (right-continuous).
    fn interval(&self, t: f64) -> usize {
        let n = self.knots.len();
        let i = self.knots.partition_point(|(tk, _)| *tk <= t);
        i.saturating_sub(1).min(n - 2)
    }

    pub fn value(&self, t: f64) -> Result<Vector> {
        self.check_time(t)?;
        let mut out = [0.0; 3];
        match self.knots.len() {
            0 => {}
            1 => out[..self.knots[0].1.len()].copy_from_slice(&self.knots[0].1),
            _ => {
                let i = self.interval(t);
                let (t0, v0) = &self.knots[i];
                let (t1, v1) = &self.knots[i + 1];
                let s = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
                for k in 0..v0.len() {
                    out[k] = v0[k] + s * (v1[k] - v0[k]);
                }
            }
        }
        Ok(out)
    }

    /// Time derivative; at a knot the right derivative (left at the last knot).
    pub fn slope(&self, t: f64) -> Result<Vector> {
        self.check_time(t)?;
        let mut out = [0.0; 3];
        if self.knots.len() >= 2 {
            let i = self.interval(t);
            let (t0, v0) = &self.knots[i];
            let (t1, v1) = &self.knots[i + 1];
            for k in 0..v0.len() {
                out[k] = (v1[k] - v0[k]) / (t1 - t0);
            }
        }
        Ok(out)
    }

    pub fn knot_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.knots.iter().map(|(t, _)| *t)
    }
}

/// External field h, body force f and traction g.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Loads {
    #[serde(default)]
    pub h: LoadHistory,
    #[serde(default)]
    pub f: LoadHistory,
    #[serde(default)]
    pub g: LoadHistory,
}

/// Load values (or slopes) at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LoadSample {
    pub h: Vector,
    pub f: Vector,
    pub g: Vector,
}

impl Loads {
    pub fn validate(&self, dim: usize, horizon: f64) -> Result<()> {
        self.h.validate("h", dim, horizon)?;
        self.f.validate("f", dim, horizon)?;
        self.g.validate("g", dim, horizon)
    }

    pub fn at(&self, t: f64) -> Result<LoadSample> {
        Ok(LoadSample {
            h: self.h.value(t)?,
            f: self.f.value(t)?,
            g: self.g.value(t)?,
        })
    }

    pub fn rate(&self, t: f64) -> Result<LoadSample> {
        Ok(LoadSample {
            h: self.h.slope(t)?,
            f: self.f.slope(t)?,
            g: self.g.slope(t)?,
        })
    }

    /// Sorted, deduplicated knot times of all three histories.
    pub fn knot_times(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.h.knot_times().chain(self.f.knot_times()).chain(self.g.knot_times()).collect();
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup();
        ts
    }
}
