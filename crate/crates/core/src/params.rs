use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exchange statistics of the impurity species.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
}

/// Physical parameters of the bath-impurity mixture in harmonic units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub n_b: usize,
    pub n_i: usize,
    #[serde(default = "one")]
    pub m_b: f64,
    #[serde(default = "one")]
    pub m_i: f64,
    #[serde(default = "one")]
    pub omega: f64,
    pub g_bb: f64,
    pub g_bi: f64,
    #[serde(default)]
    pub g_ii: f64,
    #[serde(default = "boson")]
    pub statistics: Statistics,
}

fn one() -> f64 {
    1.0
}

fn boson() -> Statistics {
    Statistics::Boson
}

impl Default for SystemParams {
    fn default() -> Self {
        Self { n_b: 100, n_i: 1, m_b: 1.0, m_i: 1.0, omega: 1.0, g_bb: 0.5, g_bi: 1.5, g_ii: 0.0, statistics: Statistics::Boson }
    }
}

impl SystemParams {
    /// Checks the invariants required by the mean-field tier.
    pub fn validate(&self) -> Result<()> {
        if self.n_b == 0 {
            return Err(Error::InvalidParameter("n_b must be at least 1".into()));
        }
        if !(1..=2).contains(&self.n_i) {
            return Err(Error::InvalidParameter(format!("n_i must be 1 or 2, got {}", self.n_i)));
        }
        self.validate_physical()
    }

    pub(crate) fn validate_physical(&self) -> Result<()> {
        for (name, v) in [("m_b", self.m_b), ("m_i", self.m_i), ("omega", self.omega)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("g_bb", self.g_bb), ("g_bi", self.g_bi), ("g_ii", self.g_ii)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        if self.g_bb < 0.0 {
            return Err(Error::InvalidParameter("g_bb must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_g_bi(mut self, g: f64) -> Self {
        self.g_bi = g;
        self
    }

    pub fn with_impurities(mut self, n_i: usize, statistics: Statistics) -> Self {
        self.n_i = n_i;
        self.statistics = statistics;
        self
    }
}
