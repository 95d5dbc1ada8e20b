use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::relaxation::DarkRunSettings;
use crate::spectroscopy::{detuning_grid, BlastMode, SolverKind, SolverSettings};

/// Everything a CLI verb needs; every section except `params` has defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: SystemParams,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub pulses: PulseConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub dark: DarkRunSettings,
    #[serde(default)]
    pub output: OutputConfig,
    /// Only used by synthetic-noise utilities.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    pub pump_omega: f64,
    /// Defaults to a resonant pi pulse.
    pub pump_duration: Option<f64>,
    /// Pump detuning for probe runs; the pump sweep's fitted resonance when absent.
    pub pump_detuning: Option<f64>,
    pub probe_omega: f64,
    pub probe_duration: Option<f64>,
    pub blast: BlastMode,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            pump_omega: 10.0,
            pump_duration: None,
            pump_detuning: None,
            probe_omega: 1.0,
            probe_duration: None,
            blast: BlastMode::Projector,
        }
    }
}

impl PulseConfig {
    pub fn pump_duration(&self) -> f64 {
        self.pump_duration.unwrap_or(std::f64::consts::PI / self.pump_omega)
    }

    pub fn probe_duration(&self) -> f64 {
        self.probe_duration.unwrap_or(std::f64::consts::PI / self.probe_omega)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pump_omega", self.pump_omega),
            ("probe_omega", self.probe_omega),
            ("pump_duration", self.pump_duration()),
            ("probe_duration", self.probe_duration()),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config { line: None, msg: format!("pulses.{name} must be positive, got {v}") });
            }
        }
        Ok(())
    }
}

/// Explicit list or evenly spaced range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DetuningSpec {
    List(Vec<f64>),
    Range { lo: f64, hi: f64, n: usize },
}

impl DetuningSpec {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            DetuningSpec::List(v) => Ok(v.clone()),
            DetuningSpec::Range { lo, hi, n } => {
                if *n < 2 || !(hi > lo) {
                    return Err(Error::InvalidParameter(format!("detuning range needs hi > lo and n >= 2, got {lo}..{hi} x {n}")));
                }
                Ok(detuning_grid(*lo, *hi, *n))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub pump_detunings: Option<DetuningSpec>,
    pub probe_detunings: Option<DetuningSpec>,
    pub t_dark: Vec<f64>,
    pub ramsey_t_max: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { pump_detunings: None, probe_detunings: None, t_dark: vec![8.0], ramsey_t_max: 20.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("pps-out") }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config { line: None, msg: e.to_string() };
        match self.solver.kind {
            SolverKind::Coupled => self.params.validate().map_err(wrap)?,
            SolverKind::Ci => {
                if self.params.n_b == 0 || !(1..=4).contains(&self.params.n_i) {
                    return Err(Error::Config { line: None, msg: "few-body runs need n_b >= 1 and 1 <= n_i <= 4".into() });
                }
            }
        }
        self.pulses.validate()?;
        self.dark.validate().map_err(wrap)?;
        for t in &self.sweep.t_dark {
            if !(*t >= 0.0) {
                return Err(Error::Config { line: None, msg: format!("sweep.t_dark entries must be non-negative, got {t}") });
            }
        }
        for spec in [&self.sweep.pump_detunings, &self.sweep.probe_detunings].into_iter().flatten() {
            spec.values().map_err(wrap)?;
        }
        Ok(())
    }
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

pub fn parse_config_str(src: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(src).map_err(|e| Error::Config {
        line: e.span().map(|s| line_of(src, s.start)),
        msg: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let src = std::fs::read_to_string(path)?;
    parse_config_str(&src)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("[params]\nn_b = 100\nn_i = 1\ng_bb = 0.5\ng_bi = 1.5\n").unwrap();
        assert_eq!(c.solver.kind, SolverKind::Coupled);
        assert_eq!(c.pulses.pump_omega, 10.0);
        assert!((c.pulses.pump_duration() - std::f64::consts::PI / 10.0).abs() < 1e-15);
        assert_eq!(c.dark, DarkRunSettings::default());
        assert_eq!(c.params.m_i, 1.0);
    }

    #[test]
    fn full_config_round_trips() {
        let src = r#"
seed = 4
[params]
n_b = 100
n_i = 2
g_bb = 0.5
g_bi = -0.5
statistics = "fermion"
[solver]
kind = "coupled"
evolve = { dt = 0.004, splitting = "yoshida4" }
[pulses]
pump_omega = 10.0
probe_omega = 1.0
blast = { mode = "dissipative", gamma = 200.0, t_b = 0.05 }
[sweep]
pump_detunings = { lo = -20.0, hi = 5.0, n = 51 }
probe_detunings = [-2.0, -1.0, 0.0, 1.0]
t_dark = [0.0, 8.0, 150.0]
[dark]
t_end = 50.0
window = [10.0, 50.0]
[output]
dir = "runs/a"
"#;
        let c = parse_config_str(src).unwrap();
        assert_eq!(c.params.statistics, crate::params::Statistics::Fermion);
        assert_eq!(c.solver.evolve.unwrap().dt, 0.004);
        assert_eq!(c.solver.evolve.unwrap().stride, 0.1);
        assert_eq!(c.sweep.pump_detunings.as_ref().unwrap().values().unwrap().len(), 51);
        assert_eq!(c.pulses.blast, BlastMode::Dissipative { gamma: 200.0, t_b: 0.05 });
        assert_eq!(c.dark.sample_every, 0.5);
        let back = parse_config_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_carry_lines() {
        let e = parse_config_str("[params]\nn_b = 100\nn_i = 1\ng_bb = \"half\"\ng_bi = 1.5\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: Some(4), .. }), "{e}");
        let e = parse_config_str("[params]\nn_b = 100\nn_i = 1\ng_bb = 0.5\ng_bi = 1.5\nbogus = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: Some(6), .. }), "{e}");
        let e = parse_config_str("[params]\nn_b = 100\ng_bb = 0.5\ng_bi = 1.5\n").unwrap_err();
        assert!(e.to_string().contains("n_i"), "{e}");
        assert!(parse_config_str("[params]\nn_b = 100\nn_i = 1\ng_bb = 0.5\ng_bi = 1.5\n[pulses]\npump_omega = -1.0\n").is_err());
    }
}
