//! Pump-probe protocol, detuning sweeps and analysis of the resulting spectra.

mod classify;
mod fit;
mod lineshape;
mod protocol;

use serde::{Deserialize, Serialize};

use crate::coupled::PulseLabel;
use crate::error::{Error, Result};
use crate::params::SystemParams;

pub use classify::{classify_peaks, ClassifiedPeak, PeakLabel, FREE_WINDOW, FRINGE_RATIO, POLARON_REMAINDER};
pub use fit::{fit_lineshape, fit_lineshape_samples, ResonanceFit};
pub use protocol::{
    default_probe_detunings, default_pump_detunings, run_protocol, sweep_probe, sweep_pump, BlastMode, MeanFieldGrids,
    PopulationSample, PreparedSolver, ProtocolResult, ProtocolSequence, ProtocolState, SolverKind, SolverSettings, Stage,
    CI_MAX_BATH,
};
pub use lineshape::{lineshape, side_peak_amplitude, side_peak_coefficient, solve_peak_locations, tan_root, PeakLocation};

/// What produced a spectrum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub pulse: Option<PulseLabel>,
    pub t_dark: Option<f64>,
    pub omega_r0: Option<f64>,
    pub duration: Option<f64>,
    pub params: Option<SystemParams>,
}

/// Transfer fraction against detuning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub detunings: Vec<f64>,
    pub fractions: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn new(detunings: Vec<f64>, fractions: Vec<f64>, meta: SpectrumMeta) -> Result<Self> {
        let s = Self { detunings, fractions, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.detunings.len() != self.fractions.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} detunings vs {} fractions",
                self.detunings.len(),
                self.fractions.len()
            )));
        }
        if self.detunings.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("detunings must be strictly increasing".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(-1e-9..=1.0 + 1e-9).contains(*f)) {
            return Err(Error::InvalidParameter(format!("transfer fraction {f} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.detunings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detunings.is_empty()
    }

    /// Sample with the largest fraction.
    pub fn argmax(&self) -> Option<(f64, f64)> {
        let i = (0..self.len()).max_by(|&a, &b| self.fractions[a].total_cmp(&self.fractions[b]))?;
        Some((self.detunings[i], self.fractions[i]))
    }
}

/// `n` evenly spaced detunings on `[lo, hi]`.
pub fn detuning_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
