//! Pump, blast, dark time and probe on either solver, plus detuning sweeps.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Spectrum, SpectrumMeta};
use crate::ci::{CiConfig, CiSystem, ManyBodyState};
use crate::coupled::{apply_blast_dissipative, blast_project, evolve_coupled, CoupledState, EvolveOptions, PulseLabel, PulseSpec};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::meanfield::relax_ground_state;
use crate::observables::{flip_all_up, impurity_overlap};
use crate::params::SystemParams;

/// Largest bath the few-body solver accepts.
pub const CI_MAX_BATH: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum BlastMode {
    Projector,
    Dissipative { gamma: f64, t_b: f64 },
}

/// Pump, blast, dark interval and optional probe, in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSequence {
    pub pump: PulseSpec,
    pub blast: BlastMode,
    pub t_dark: f64,
    pub probe: Option<PulseSpec>,
}

impl ProtocolSequence {
    pub fn validate(&self) -> Result<()> {
        self.pump.validate()?;
        if self.pump.label != PulseLabel::Pump {
            return Err(Error::InvalidParameter("first pulse must be the pump".into()));
        }
        if !(self.t_dark >= 0.0) || !self.t_dark.is_finite() {
            return Err(Error::InvalidParameter(format!("dark time must be non-negative, got {}", self.t_dark)));
        }
        if let Some(p) = &self.probe {
            p.validate()?;
            if p.label != PulseLabel::Probe {
                return Err(Error::InvalidParameter("last pulse must be the probe".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Coupled,
    Ci,
}

impl std::str::FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coupled" | "mf" | "meanfield" => Ok(Self::Coupled),
            "ci" => Ok(Self::Ci),
            o => Err(Error::InvalidParameter(format!("unknown solver '{o}'"))),
        }
    }
}

/// Mean-field grids. A pair of impurities lives on the square of its grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldGrids {
    pub bath_points: usize,
    pub bath_half_width: f64,
    pub imp_points: usize,
    pub imp_half_width: f64,
}

impl Default for MeanFieldGrids {
    fn default() -> Self {
        Self { bath_points: 255, bath_half_width: 12.0, imp_points: 255, imp_half_width: 12.0 }
    }
}

impl MeanFieldGrids {
    /// Smaller grid for pairs, whose cost grows with its square. The bath
    /// shares it: coupling a fine bath to a coarse impurity grid through
    /// interpolation injects grid-scale forces that spoil energy conservation.
    pub fn for_params(params: &SystemParams) -> Self {
        if params.n_i == 2 {
            Self { bath_points: 95, bath_half_width: 10.0, imp_points: 95, imp_half_width: 10.0 }
        } else {
            Self::default()
        }
    }

    pub fn build(&self) -> Result<(Arc<Grid>, Arc<Grid>)> {
        let b = Arc::new(Grid::sine_dvr(self.bath_points, -self.bath_half_width, self.bath_half_width)?);
        let i = if self.imp_points == self.bath_points && self.imp_half_width == self.bath_half_width {
            b.clone()
        } else {
            Arc::new(Grid::sine_dvr(self.imp_points, -self.imp_half_width, self.imp_half_width)?)
        };
        Ok((b, i))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default)]
    pub kind: SolverKind,
    #[serde(default)]
    pub grids: Option<MeanFieldGrids>,
    #[serde(default)]
    pub evolve: Option<EvolveOptions>,
    #[serde(default)]
    pub ci: Option<CiConfig>,
    /// Few-body time step.
    #[serde(default)]
    pub ci_dt: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self::coupled()
    }
}

impl SolverSettings {
    pub fn coupled() -> Self {
        Self { kind: SolverKind::Coupled, grids: None, evolve: None, ci: None, ci_dt: None }
    }

    pub fn ci() -> Self {
        Self { kind: SolverKind::Ci, ..Self::coupled() }
    }
}

/// A solver with its initial (all spin-down) state ready, reusable across runs.
#[derive(Clone, Debug)]
pub enum PreparedSolver {
    Coupled { params: SystemParams, initial: CoupledState, opts: EvolveOptions },
    Ci { system: Box<CiSystem>, initial: ManyBodyState, dt: f64 },
}

/// Solver-independent state along a protocol.
#[derive(Clone, Debug)]
pub enum ProtocolState {
    Coupled(CoupledState),
    Ci(ManyBodyState),
}

impl ProtocolState {
    pub fn time(&self) -> f64 {
        match self {
            ProtocolState::Coupled(s) => s.time,
            ProtocolState::Ci(s) => s.time,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pump,
    Dark,
    Probe,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSample {
    pub time: f64,
    pub stage: Stage,
    pub n_up: f64,
    pub n_down: f64,
}

#[derive(Clone, Debug)]
pub struct ProtocolResult {
    pub samples: Vec<PopulationSample>,
    /// `(<N_up>, <N_down>)` at the end of the pump.
    pub after_pump: (f64, f64),
    /// Squared overlap of the pumped state with the initial state flipped to spin up.
    pub pump_fidelity: f64,
    /// Same overlap for the impurity alone: `<chi| rho_I |chi>` with `chi` the flipped initial impurity state.
    pub impurity_fidelity: f64,
    pub final_populations: (f64, f64),
    pub final_state: ProtocolState,
}

impl PreparedSolver {
    pub fn prepare(params: &SystemParams, settings: &SolverSettings) -> Result<Self> {
        match settings.kind {
            SolverKind::Coupled => {
                params.validate()?;
                let grids = settings.grids.clone().unwrap_or_else(|| MeanFieldGrids::for_params(params));
                let (bg, ig) = grids.build()?;
                let (bath, _) = relax_ground_state(params, bg, None, 1e-10)?;
                let initial = CoupledState::initial(params, bath, ig)?;
                Ok(Self::Coupled { params: params.clone(), initial, opts: settings.evolve.unwrap_or_default() })
            }
            SolverKind::Ci => {
                if params.n_b > CI_MAX_BATH {
                    return Err(Error::Unsupported(format!(
                        "few-body solver takes at most {CI_MAX_BATH} bath atoms, got {}",
                        params.n_b
                    )));
                }
                let cfg = settings.ci.clone().unwrap_or_else(|| CiConfig::for_params(params));
                if cfg.spin_filter.is_some() {
                    return Err(Error::Unsupported("protocols need both spin states".into()));
                }
                let system = CiSystem::new(params, &cfg)?;
                let initial = system.initial_state()?;
                Ok(Self::Ci { system: Box::new(system), initial, dt: settings.ci_dt.unwrap_or(0.01) })
            }
        }
    }

    pub fn params(&self) -> &SystemParams {
        match self {
            Self::Coupled { params, .. } => params,
            Self::Ci { system, .. } => &system.params,
        }
    }

    pub fn initial(&self) -> ProtocolState {
        match self {
            Self::Coupled { initial, .. } => ProtocolState::Coupled(initial.clone()),
            Self::Ci { initial, .. } => ProtocolState::Ci(initial.clone()),
        }
    }

    fn n_i(&self) -> f64 {
        self.params().n_i as f64
    }

    pub fn populations(&self, s: &ProtocolState) -> (f64, f64) {
        match (self, s) {
            (_, ProtocolState::Coupled(c)) => {
                let (u, d) = c.imp.spin_populations();
                (u * self.n_i(), d * self.n_i())
            }
            (Self::Ci { system, .. }, ProtocolState::Ci(m)) => system.spin_populations(m),
            _ => (f64::NAN, f64::NAN),
        }
    }

    /// Evolves `state` through one pulse, reporting populations every stride.
    pub fn evolve(
        &self,
        state: &ProtocolState,
        pulse: &PulseSpec,
        stage: Stage,
        samples: &mut Vec<PopulationSample>,
    ) -> Result<ProtocolState> {
        let n_i = self.n_i();
        match (self, state) {
            (Self::Coupled { params, opts, .. }, ProtocolState::Coupled(s)) => {
                let out = evolve_coupled(s, params, pulse, opts, |c| {
                    let (u, d) = c.imp.spin_populations();
                    samples.push(PopulationSample { time: c.time, stage, n_up: u * n_i, n_down: d * n_i });
                    Ok(())
                })?;
                Ok(ProtocolState::Coupled(out))
            }
            (Self::Ci { system, dt, .. }, ProtocolState::Ci(s)) => {
                let stride = self.stride();
                let out = system.evolve(s, pulse, *dt, stride, |m| {
                    let (u, d) = system.spin_populations(m);
                    samples.push(PopulationSample { time: m.time, stage, n_up: u, n_down: d });
                    Ok(())
                })?;
                Ok(ProtocolState::Ci(out))
            }
            _ => Err(Error::ShapeMismatch("state does not belong to this solver".into())),
        }
    }

    fn stride(&self) -> f64 {
        match self {
            Self::Coupled { opts, .. } => opts.stride,
            Self::Ci { .. } => 0.1,
        }
    }

    pub fn blast(&self, state: &ProtocolState, mode: &BlastMode) -> Result<ProtocolState> {
        match (self, state) {
            (Self::Coupled { .. }, ProtocolState::Coupled(s)) => Ok(ProtocolState::Coupled(match *mode {
                BlastMode::Projector => blast_project(s)?,
                BlastMode::Dissipative { gamma, t_b } => apply_blast_dissipative(s, gamma, t_b)?,
            })),
            (Self::Ci { system, .. }, ProtocolState::Ci(s)) => Ok(ProtocolState::Ci(match *mode {
                BlastMode::Projector => system.blast_project(s)?,
                BlastMode::Dissipative { gamma, t_b } => system.blast_dissipative(s, gamma, t_b)?,
            })),
            _ => Err(Error::ShapeMismatch("state does not belong to this solver".into())),
        }
    }

    /// `|<flip(initial) | state>|^2`.
    pub fn quench_fidelity(&self, state: &ProtocolState) -> Result<f64> {
        match (self, state) {
            (Self::Coupled { initial, params, .. }, ProtocolState::Coupled(s)) => {
                let grid = &initial.bath.grid;
                let n_b = params.n_b as f64;
                let ob = grid.inner(&initial.bath.psi, &s.bath.psi).norm() / n_b;
                let oi = impurity_overlap(&flip_all_up(&initial.imp), &s.imp)?.norm();
                Ok((ob.powf(n_b) * oi).powi(2))
            }
            (Self::Ci { system, initial, .. }, ProtocolState::Ci(s)) => {
                Ok(system.flip_down_to_up(initial)?.inner(s).norm_sqr())
            }
            _ => Err(Error::ShapeMismatch("state does not belong to this solver".into())),
        }
    }

    /// `<chi| rho_I |chi>` with `chi` the initial impurity state flipped to spin up.
    pub fn impurity_fidelity(&self, state: &ProtocolState) -> Result<f64> {
        match (self, state) {
            (Self::Coupled { initial, .. }, ProtocolState::Coupled(s)) => {
                Ok(impurity_overlap(&flip_all_up(&initial.imp), &s.imp)?.norm_sqr())
            }
            (Self::Ci { system, initial, .. }, ProtocolState::Ci(s)) => {
                let f = system.flip_down_to_up(initial)?;
                let di = system.basis.imp_dim();
                let db = system.basis.bath_dim();
                // the initial state is a product, so any dominant bath row carries the impurity factor
                let row_norm = |b: usize| f.amps[b * di..(b + 1) * di].iter().map(|z| z.norm_sqr()).sum::<f64>();
                let b0 = (0..db).max_by(|&a, &b| row_norm(a).total_cmp(&row_norm(b))).unwrap();
                let n = row_norm(b0).sqrt();
                let chi: Vec<_> = f.amps[b0 * di..(b0 + 1) * di].iter().map(|z| z / n).collect();
                Ok((0..db)
                    .map(|b| chi.iter().zip(&s.amps[b * di..(b + 1) * di]).map(|(c, z)| c.conj() * z).sum::<crate::grid::C64>().norm_sqr())
                    .sum())
            }
            _ => Err(Error::ShapeMismatch("state does not belong to this solver".into())),
        }
    }

    /// Pump alone, starting at `t = -t_e` so that the pump ends at zero.
    pub fn pump(&self, pump: &PulseSpec, samples: &mut Vec<PopulationSample>) -> Result<ProtocolState> {
        let mut s = self.initial();
        match &mut s {
            ProtocolState::Coupled(c) => c.time = -pump.duration,
            ProtocolState::Ci(m) => m.time = -pump.duration,
        }
        self.evolve(&s, pump, Stage::Pump, samples)
    }
}

/// Runs the full sequence. Deterministic for identical inputs.
pub fn run_protocol(solver: &PreparedSolver, protocol: &ProtocolSequence) -> Result<ProtocolResult> {
    protocol.validate()?;
    let mut samples = Vec::new();
    let pumped = solver.pump(&protocol.pump, &mut samples)?;
    let after_pump = solver.populations(&pumped);
    let pump_fidelity = solver.quench_fidelity(&pumped)?;
    let impurity_fidelity = solver.impurity_fidelity(&pumped)?;
    let mut state = solver.blast(&pumped, &protocol.blast)?;
    if protocol.t_dark > 0.0 {
        state = solver.evolve(&state, &PulseSpec::dark(protocol.t_dark), Stage::Dark, &mut samples)?;
    }
    if let Some(probe) = &protocol.probe {
        state = solver.evolve(&state, probe, Stage::Probe, &mut samples)?;
    }
    Ok(ProtocolResult {
        samples,
        after_pump,
        pump_fidelity,
        impurity_fidelity,
        final_populations: solver.populations(&state),
        final_state: state,
    })
}

fn meta(solver: &PreparedSolver, pulse: PulseLabel, omega: f64, duration: f64, t_dark: Option<f64>) -> SpectrumMeta {
    SpectrumMeta {
        pulse: Some(pulse),
        t_dark,
        omega_r0: Some(omega),
        duration: Some(duration),
        params: Some(solver.params().clone()),
    }
}

/// Spin-up fraction at the end of a pump pulse for each detuning.
pub fn sweep_pump(solver: &PreparedSolver, detunings: &[f64], omega_r0: f64, t_e: f64) -> Result<Spectrum> {
    let n_i = solver.n_i();
    let fractions = detunings
        .par_iter()
        .map(|&d| {
            let s = solver.pump(&PulseSpec::pump(omega_r0, d, t_e), &mut Vec::new())?;
            Ok((solver.populations(&s).0 / n_i).clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Spectrum::new(detunings.to_vec(), fractions, meta(solver, PulseLabel::Pump, omega_r0, t_e, None))
}

/// Probe sweep at a fixed dark time. The pump, blast and dark interval are
/// shared by all detunings; the signal is the spin-down fraction after the probe.
pub fn sweep_probe(
    solver: &PreparedSolver,
    pump: &PulseSpec,
    blast: &BlastMode,
    t_dark: f64,
    detunings: &[f64],
    omega_r0: f64,
    t_probe: f64,
) -> Result<Spectrum> {
    let base = ProtocolSequence { pump: *pump, blast: *blast, t_dark, probe: None };
    let prepared = run_protocol(solver, &base)?.final_state;
    let n_i = solver.n_i();
    let fractions = detunings
        .par_iter()
        .map(|&d| {
            let s = solver.evolve(&prepared, &PulseSpec::probe(omega_r0, d, t_probe), Stage::Probe, &mut Vec::new())?;
            Ok((solver.populations(&s).1 / n_i).clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Spectrum::new(detunings.to_vec(), fractions, meta(solver, PulseLabel::Probe, omega_r0, t_probe, Some(t_dark)))
}

/// Default pump detunings: 81 points spanning 15 trap units either side of `center`.
pub fn default_pump_detunings(center: f64) -> Vec<f64> {
    super::detuning_grid(center - 15.0, center + 15.0, 81)
}

/// Default probe detunings: 121 points on [-12, 12], widened to include `expected`.
pub fn default_probe_detunings(expected: Option<f64>) -> Vec<f64> {
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    if let Some(e) = expected {
        lo = lo.min(e - 5.0);
        hi = hi.max(e + 5.0);
    }
    super::detuning_grid(lo, hi, 121)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small(params: &SystemParams) -> PreparedSolver {
        let grids = MeanFieldGrids { bath_points: 63, bath_half_width: 8.0, imp_points: 63, imp_half_width: 8.0 };
        let settings = SolverSettings { grids: Some(grids), ..SolverSettings::coupled() };
        PreparedSolver::prepare(params, &settings).unwrap()
    }

    fn round_trip(protocol_solver: &PreparedSolver) -> ProtocolResult {
        let seq = ProtocolSequence {
            pump: PulseSpec::pump(10.0, 0.0, PI / 10.0),
            blast: BlastMode::Projector,
            t_dark: 1.3,
            probe: Some(PulseSpec::probe(1.0, 0.0, PI)),
        };
        run_protocol(protocol_solver, &seq).unwrap()
    }

    #[test]
    fn free_impurity_round_trip_mean_field() {
        let p = SystemParams { n_b: 10, ..Default::default() }.with_g_bi(0.0);
        let r = round_trip(&small(&p));
        assert!((r.final_populations.1 - 1.0).abs() < 1e-3);
        assert!(r.pump_fidelity > 0.999);
        let dark: Vec<_> = r.samples.iter().filter(|s| s.stage == Stage::Dark).collect();
        assert!(dark.len() > 5);
        assert!(dark.iter().all(|s| (s.n_up - dark[0].n_up).abs() < 1e-10));
    }

    #[test]
    fn free_impurity_round_trip_few_body() {
        let p = SystemParams { n_b: 2, ..Default::default() }.with_g_bi(0.0);
        let cfg = CiConfig { d_b: 3, d_i: 3, grid_points: 64, half_width: 8.0, ..Default::default() };
        let s = PreparedSolver::prepare(&p, &SolverSettings { ci: Some(cfg), ..SolverSettings::ci() }).unwrap();
        let r = round_trip(&s);
        assert!((r.final_populations.1 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn sweeps_are_deterministic() {
        let p = SystemParams { n_b: 10, ..Default::default() }.with_g_bi(0.5);
        let s = small(&p);
        let d = crate::spectroscopy::detuning_grid(-5.0, 15.0, 9);
        let a = sweep_pump(&s, &d, 10.0, PI / 10.0).unwrap();
        let b = sweep_pump(&s, &d, 10.0, PI / 10.0).unwrap();
        assert_eq!(a.fractions, b.fractions);
        let pump = PulseSpec::pump(10.0, 3.0, PI / 10.0);
        let pa = sweep_probe(&s, &pump, &BlastMode::Projector, 0.5, &d[..4], 1.0, PI).unwrap();
        let pb = sweep_probe(&s, &pump, &BlastMode::Projector, 0.5, &d[..4], 1.0, PI).unwrap();
        assert_eq!(pa.fractions, pb.fractions);
        assert_eq!(pa.meta.t_dark, Some(0.5));
    }

    #[test]
    fn solver_capability_checked() {
        let p = SystemParams { n_b: 100, ..Default::default() };
        assert!(matches!(PreparedSolver::prepare(&p, &SolverSettings::ci()), Err(Error::Unsupported(_))));
        let bad = ProtocolSequence {
            pump: PulseSpec::probe(1.0, 0.0, 1.0),
            blast: BlastMode::Projector,
            t_dark: 0.0,
            probe: None,
        };
        assert!(bad.validate().is_err());
    }
}
