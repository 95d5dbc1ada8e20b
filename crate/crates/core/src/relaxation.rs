//! Long dark-time runs after a quench to spin up: interaction-energy series,
//! windowed averages of the bath density and impurity density matrix, the
//! coherence variance as a function of elapsed time, and the thermal analysis
//! built on them.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ci::{CiSystem, ManyBodyState};
use crate::coupled::{coupled_energy, evolve_coupled, CoupledState, EvolveOptions, PulseSpec};
use crate::error::{Error, Result};
use crate::eth::{
    effective_hamiltonian, fit_temperature, temperature_from_energy, EffectiveHamiltonian, OccupationModel,
    TemperatureFit, Truncation,
};
use crate::grid::{Grid, C64};
use crate::observables::{
    coherence_function, flip_all_up, impurity_energy, interspecies_energy, one_body_density_matrix, support_region,
    CoherenceVarianceAccumulator, OneBodyDensityMatrix, RunningAverage, Species,
};
use crate::params::SystemParams;

/// Relative density threshold for the coherence region.
pub const REGION_THRESHOLD: f64 = 1e-3;

/// Pointwise support cut for stored coherence fields. Much lower than the
/// plotting default so that moving nodes of a pure state do not register as
/// decoherence.
pub const VARIANCE_SUPPORT: f64 = 0.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DarkRunSettings {
    pub t_end: f64,
    /// Averaging window for the thermal inputs.
    pub window: (f64, f64),
    /// Spacing of energy and density samples.
    pub sample_every: f64,
    /// Spacing of stored coherence fields; `None` skips the variance.
    pub coherence_every: Option<f64>,
}

impl Default for DarkRunSettings {
    fn default() -> Self {
        Self { t_end: 300.0, window: (100.0, 300.0), sample_every: 0.5, coherence_every: Some(1.0) }
    }
}

impl DarkRunSettings {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.window;
        if !(self.t_end > 0.0 && self.sample_every > 0.0) {
            return Err(Error::InvalidParameter("dark run needs positive duration and sample spacing".into()));
        }
        if !(0.0 <= a && a < b && b <= self.t_end + 1e-9) {
            return Err(Error::InvalidParameter(format!("window ({a}, {b}) must lie inside [0, {}]", self.t_end)));
        }
        if let Some(c) = self.coherence_every {
            if !(c >= self.sample_every) {
                return Err(Error::InvalidParameter("coherence spacing must not be finer than sampling".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DarkRun {
    pub params: SystemParams,
    /// Impurity grid.
    pub grid: Arc<Grid>,
    pub times: Vec<f64>,
    /// `<H_BI> / N_I`.
    pub interspecies: Vec<f64>,
    /// Impurity kinetic, trap and interaction energy.
    pub impurity_energy: Vec<f64>,
    pub total_energy: Vec<f64>,
    pub window: (f64, f64),
    /// Bath density averaged over the window, on the impurity grid.
    pub rho_bar_b: Vec<f64>,
    pub rho_bar_up: OneBodyDensityMatrix,
    pub e_bar_up: f64,
    /// `(T, variance of |g1| over [0, T])`.
    pub coherence_variance: Vec<(f64, f64)>,
}

impl DarkRun {
    /// Largest relative deviation of the total energy from its initial value.
    pub fn energy_drift(&self) -> f64 {
        let e0 = self.total_energy[0];
        self.total_energy.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs().max(1e-300)
    }

    /// Trapezoidal mean of the interaction-energy series over `[a, b]`.
    pub fn interspecies_mean(&self, a: f64, b: f64) -> Result<f64> {
        window_mean(&self.times, &self.interspecies, a, b)
    }
}

/// Trapezoidal mean of samples falling inside `[a, b]`.
pub fn window_mean(times: &[f64], values: &[f64], a: f64, b: f64) -> Result<f64> {
    let mut acc = RunningAverage::<f64>::new();
    for (t, v) in times.iter().zip(values) {
        if *t >= a - 1e-9 && *t <= b + 1e-9 {
            acc.push(*t, v);
        }
    }
    Ok(acc.average()?.value)
}

/// Least-squares slope of `(t, v)` pairs with `t >= from`.
pub fn tail_slope(series: &[(f64, f64)], from: f64) -> Result<f64> {
    let pts: Vec<_> = series.iter().filter(|(t, _)| *t >= from).collect();
    if pts.len() < 2 {
        return Err(Error::InvalidParameter("too few points for a slope".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Collects samples while a trajectory runs.
struct Recorder {
    window: (f64, f64),
    sample_every: f64,
    coherence_every: Option<f64>,
    next_coherence: f64,
    times: Vec<f64>,
    interspecies: Vec<f64>,
    imp_energy: Vec<f64>,
    total: Vec<f64>,
    rho_b: RunningAverage<Vec<f64>>,
    rho_up: RunningAverage<DMatrix<C64>>,
    e_up: RunningAverage<f64>,
    density_all: RunningAverage<Vec<f64>>,
    g1: Vec<(f64, DMatrix<f64>)>,
}

impl Recorder {
    fn new(s: &DarkRunSettings) -> Self {
        Self {
            window: s.window,
            sample_every: s.sample_every,
            coherence_every: s.coherence_every,
            next_coherence: 0.0,
            times: vec![],
            interspecies: vec![],
            imp_energy: vec![],
            total: vec![],
            rho_b: RunningAverage::new(),
            rho_up: RunningAverage::new(),
            e_up: RunningAverage::new(),
            density_all: RunningAverage::new(),
            g1: vec![],
        }
    }

    fn record(&mut self, t: f64, h_bi: f64, e_imp: f64, total: f64, rho_b: impl FnOnce() -> Vec<f64>, rho: OneBodyDensityMatrix) {
        self.times.push(t);
        self.interspecies.push(h_bi);
        self.imp_energy.push(e_imp);
        self.total.push(total);
        let (a, b) = self.window;
        if t >= a - 1e-9 && t <= b + 1e-9 {
            self.rho_b.push(t, &rho_b());
            self.rho_up.push(t, &rho.matrix);
            self.e_up.push(t, &e_imp);
        }
        if let Some(every) = self.coherence_every {
            if t >= self.next_coherence - 0.5 * self.sample_every {
                self.density_all.push(t, &rho.diagonal());
                self.g1.push((t, coherence_function(&rho, VARIANCE_SUPPORT).values));
                self.next_coherence += every;
            }
        }
    }

    fn finish(self, params: &SystemParams, grid: Arc<Grid>) -> Result<DarkRun> {
        let coherence_variance = if self.g1.len() >= 2 {
            let region = support_region(&self.density_all.average()?.value, REGION_THRESHOLD);
            let mut acc = CoherenceVarianceAccumulator::new(region);
            let mut out = Vec::with_capacity(self.g1.len());
            for (k, (t, g)) in self.g1.iter().enumerate() {
                acc.push(*t, g);
                if k > 0 {
                    out.push((*t, acc.variance()?));
                }
            }
            out
        } else {
            vec![]
        };
        let rho_matrix = self.rho_up.average()?.value;
        Ok(DarkRun {
            params: params.clone(),
            rho_bar_up: OneBodyDensityMatrix { species: Species::Up, grid: grid.clone(), matrix: rho_matrix, time: f64::NAN },
            grid,
            times: self.times,
            interspecies: self.interspecies,
            impurity_energy: self.imp_energy,
            total_energy: self.total,
            window: self.window,
            rho_bar_b: self.rho_b.average()?.value,
            e_bar_up: self.e_up.average()?.value,
            coherence_variance,
        })
    }
}

/// Flips every impurity of `initial` to spin up and evolves without drive.
pub fn run_dark_coupled(
    initial: &CoupledState,
    params: &SystemParams,
    opts: &EvolveOptions,
    settings: &DarkRunSettings,
) -> Result<DarkRun> {
    settings.validate()?;
    let start = CoupledState { bath: initial.bath.clone(), imp: flip_all_up(&initial.imp), time: 0.0 };
    let dark = PulseSpec::dark(settings.t_end);
    let opts = EvolveOptions { stride: settings.sample_every, ..*opts };
    let mut rec = Recorder::new(settings);
    let ig = start.imp.grid().clone();
    let interp = start.bath.grid.interpolation_to(&ig);
    evolve_coupled(&start, params, &dark, &opts, |s| {
        let e = coupled_energy(s, params, &dark)?;
        rec.record(
            s.time,
            interspecies_energy(s, params),
            impurity_energy(s, params)?,
            e.total(),
            || interp.apply(&s.bath.density()),
            one_body_density_matrix(s, Species::Up),
        );
        Ok(())
    })?;
    rec.finish(params, ig)
}

/// Few-body version of [`run_dark_coupled`], starting from the spin-down ground state.
pub fn run_dark_ci(system: &CiSystem, dt: f64, settings: &DarkRunSettings) -> Result<DarkRun> {
    settings.validate()?;
    let params = &system.params;
    if params.g_ii != 0.0 && params.n_i > 1 {
        return Err(Error::Unsupported("few-body impurity energy omits the impurity-impurity term".into()));
    }
    let start: ManyBodyState = system.flip_down_to_up(&system.initial_state()?)?;
    let dark = PulseSpec::dark(settings.t_end);
    let h = system.hamiltonian(&dark)?;
    let mut rec = Recorder::new(settings);
    system.evolve(&start, &dark, dt, settings.sample_every, |s| {
        let occ = system.imp_orbital_matrix(s, true);
        let free: f64 = system.imp_energies.iter().enumerate().map(|(k, e)| e * occ[(k, k)].re).sum();
        let h_bi = system.interspecies_energy(s);
        rec.record(
            s.time,
            h_bi / params.n_i as f64,
            free + h_bi,
            h.expectation(&s.amps),
            || system.density(s, Species::Bath),
            system.one_body_density_matrix(s, Species::Up),
        );
        Ok(())
    })?;
    rec.finish(params, system.grid.clone())
}

/// Effective temperatures of a relaxed run.
#[derive(Clone, Debug)]
pub struct ThermalReport {
    pub model: OccupationModel,
    pub fit: TemperatureFit,
    pub energy_temperature: f64,
    pub e_bar_up: f64,
    pub ground_energy: f64,
    /// Occupation left in discarded levels at the energy-matched temperature.
    pub tail_weight: f64,
    pub hamiltonian: EffectiveHamiltonian,
}

pub fn thermal_analysis(run: &DarkRun, truncation: &Truncation) -> Result<ThermalReport> {
    let model = OccupationModel::for_params(&run.params);
    let h = effective_hamiltonian(run.grid.clone(), &run.rho_bar_b, &run.params, truncation)?;
    let fit = fit_temperature(&run.rho_bar_up, &h, model)?;
    let energy_temperature = temperature_from_energy(run.e_bar_up, &h, model)?;
    let tail_weight = if energy_temperature > 0.0 { h.tail_weight(model, energy_temperature)? } else { 0.0 };
    Ok(ThermalReport {
        model,
        fit,
        energy_temperature,
        e_bar_up: run.e_bar_up,
        ground_energy: model.ground_energy(&h.energies),
        tail_weight,
        hamiltonian: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_mean_and_slope() {
        let t: Vec<f64> = (0..=100).map(|k| k as f64).collect();
        let v: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((window_mean(&t, &v, 10.0, 20.0).unwrap() - 31.0).abs() < 1e-12);
        let pairs: Vec<(f64, f64)> = t.iter().zip(&v).map(|(a, b)| (*a, *b)).collect();
        assert!((tail_slope(&pairs, 50.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(tail_slope(&pairs, 100.0).is_err());
    }

    #[test]
    fn settings_checks() {
        assert!(DarkRunSettings::default().validate().is_ok());
        let bad = DarkRunSettings { window: (200.0, 100.0), ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = DarkRunSettings { t_end: 50.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn free_impurity_run_is_stationary() {
        use crate::spectroscopy::{PreparedSolver, SolverSettings};
        let p = SystemParams { n_b: 20, g_bi: 0.0, ..Default::default() };
        let mut st = SolverSettings::coupled();
        st.grids = Some(crate::spectroscopy::MeanFieldGrids {
            bath_points: 95,
            bath_half_width: 10.0,
            imp_points: 95,
            imp_half_width: 10.0,
        });
        let PreparedSolver::Coupled { initial, opts, .. } = PreparedSolver::prepare(&p, &st).unwrap() else { unreachable!() };
        let s = DarkRunSettings { t_end: 4.0, window: (1.0, 4.0), sample_every: 0.1, coherence_every: Some(0.2) };
        let run = run_dark_coupled(&initial, &p, &opts, &s).unwrap();
        assert!(run.energy_drift() < 1e-8);
        assert!(run.interspecies.iter().all(|e| *e == 0.0));
        // eigenstate of the trap: variance vanishes, averaged matrix stays pure
        assert!(run.coherence_variance.iter().all(|(_, v)| *v < 1e-12));
        assert!((run.e_bar_up - 0.5).abs() < 1e-6);
        let rep = thermal_analysis(&run, &Truncation::default()).unwrap();
        assert!(rep.energy_temperature < 0.05, "{}", rep.energy_temperature);
        assert!(rep.fit.temperature < 0.2 && rep.fit.residual < 1e-3, "{:?}", rep.fit);
    }
}
