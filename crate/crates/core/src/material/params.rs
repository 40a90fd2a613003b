use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

fn default_mu0() -> f64 {
    1.0
}

/// Constitutive constants. The elastic density is
/// W(F,m) = μ|F|^p + γ|cof F|² + β₁|Fᵀm|² + β₂|(cof F)ᵀm|² − W₀.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    pub mu: f64,
    pub p: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default)]
    pub beta2: f64,
    pub alpha: f64,
    #[serde(default = "default_mu0")]
    pub mu0: f64,
    #[serde(default)]
    pub h_c: f64,
}

impl MaterialParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let finite = [self.mu, self.p, self.gamma, self.beta1, self.beta2, self.alpha, self.mu0, self.h_c];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("material parameters must be finite"));
        }
        if !(self.p > dim as f64) {
            return Err(invalid(format!("material.p: p must exceed d (p = {}, d = {dim})", self.p)));
        }
        if !(self.mu > 0.0) {
            return Err(invalid("material.mu must be positive"));
        }
        if !(self.alpha > 0.0) {
            return Err(invalid("material.alpha must be positive"));
        }
        if !(self.mu0 > 0.0) {
            return Err(invalid("material.mu0 must be positive"));
        }
        for (name, v) in [("gamma", self.gamma), ("beta1", self.beta1), ("beta2", self.beta2), ("h_c", self.h_c)] {
            if v < 0.0 {
                return Err(invalid(format!("material.{name} must be nonnegative")));
            }
        }
        Ok(())
    }

    /// Offset making W(I, m) = 0 for unit m.
    pub fn w0(&self, dim: usize) -> f64 {
        let d = dim as f64;
        self.mu * d.powf(0.5 * self.p) + self.gamma * d + self.beta1 + self.beta2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MaterialParams {
        MaterialParams {
            mu: 1.0,
            p: 4.0,
            gamma: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            alpha: 0.1,
            mu0: 1.0,
            h_c: 0.0,
        }
    }

    #[test]
    fn growth_exponent_must_exceed_dimension() {
        let mut p = params();
        assert!(p.validate(2).is_ok());
        p.p = 2.0;
        let err = p.validate(2).unwrap_err().to_string();
        assert!(err.contains("p must exceed d"), "{err}");
        p.p = 3.0;
        assert!(p.validate(3).is_err());
    }

    #[test]
    fn signs_are_checked() {
        let mut p = params();
        p.beta1 = -1.0;
        assert!(p.validate(2).is_err());
        let mut p = params();
        p.alpha = 0.0;
        assert!(p.validate(2).is_err());
    }
}
