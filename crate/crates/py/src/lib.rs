//! Python bindings for `pps-core`.

use std::sync::Arc;

use pps_core::dimred::{self, Convention, TrapGeometry};
use pps_core::eth;
use pps_core::io::parse_config;
use pps_core::spectroscopy::{self, MeanFieldGrids, PreparedSolver, SolverSettings};
use pps_core::{Grid, Statistics, SystemParams};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: pps_core::Error) -> PyErr {
    match e {
        pps_core::Error::InvalidParameter(_) | pps_core::Error::Config { .. } | pps_core::Error::InvalidGrid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[allow(clippy::too_many_arguments)]
fn params(n_b: usize, n_i: usize, g_bb: f64, g_bi: f64, g_ii: f64, m_i: f64, fermions: bool) -> PyResult<SystemParams> {
    let p = SystemParams {
        n_b,
        n_i,
        g_bb,
        g_bi,
        g_ii,
        m_i,
        statistics: if fermions { Statistics::Fermion } else { Statistics::Boson },
        ..SystemParams::default()
    };
    p.validate().map_err(err)?;
    Ok(p)
}

/// Transferred fraction of a square pulse of duration `t_e`.
#[pyfunction]
fn lineshape(delta: f64, omega_plus: f64, delta_plus: f64, t_e: f64) -> f64 {
    spectroscopy::lineshape(delta, omega_plus, delta_plus, t_e)
}

/// k-th positive root of tan x = x.
#[pyfunction]
fn tan_root(k: usize) -> f64 {
    spectroscopy::tan_root(k)
}

#[pyfunction]
fn side_peak_amplitude(k: usize, omega_plus: f64, t_e: f64) -> f64 {
    spectroscopy::side_peak_amplitude(k, omega_plus, t_e)
}

/// Returns `[(order, delta, amplitude), ...]`.
#[pyfunction]
#[pyo3(signature = (omega_plus, delta_plus, t_e, n_max=3))]
fn peak_locations(omega_plus: f64, delta_plus: f64, t_e: f64, n_max: usize) -> PyResult<Vec<(i32, f64, f64)>> {
    let v = spectroscopy::solve_peak_locations(omega_plus, delta_plus, t_e, n_max).map_err(err)?;
    Ok(v.into_iter().map(|p| (p.order, p.delta, p.amplitude)).collect())
}

/// Least-squares fit of the lineshape. Returns `(omega_plus, delta_plus, residual)`.
#[pyfunction]
fn fit_lineshape(detunings: Vec<f64>, values: Vec<f64>, t_e: f64) -> PyResult<(f64, f64, f64)> {
    let f = spectroscopy::fit_lineshape_samples(&detunings, &values, t_e).map_err(err)?;
    Ok((f.omega_plus, f.delta_plus, f.residual))
}

/// Thomas-Fermi chemical potential and density at `x`.
#[pyfunction]
#[pyo3(signature = (x, n_b=100, g_bb=0.5))]
fn thomas_fermi(x: Vec<f64>, n_b: usize, g_bb: f64) -> PyResult<(f64, Vec<f64>)> {
    let p = params(n_b, 1, g_bb, 0.0, 0.0, 1.0, false)?;
    let (mu, rho) = pps_core::thomas_fermi_profile(&p).map_err(err)?;
    Ok((mu, x.iter().map(|&x| rho(x)).collect()))
}

/// Imaginary-time bath ground state. Returns `(x, density, mu)`.
#[pyfunction]
#[pyo3(signature = (n_b=100, g_bb=0.5, points=255, half_width=12.0, tol=1e-10))]
fn relax_bath(py: Python<'_>, n_b: usize, g_bb: f64, points: usize, half_width: f64, tol: f64) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
    let p = params(n_b, 1, g_bb, 0.0, 0.0, 1.0, false)?;
    let grid = Arc::new(Grid::sine_dvr(points, -half_width, half_width).map_err(err)?);
    let (bath, mu) = py.detach(|| pps_core::relax_ground_state(&p, grid.clone(), None, tol)).map_err(err)?;
    Ok((grid.points().to_vec(), bath.density(), mu))
}

/// Mean-field pump spectrum: ↑ fraction after a square pulse at each detuning.
#[pyfunction]
#[pyo3(signature = (detunings, omega=10.0, n_b=100, n_i=1, g_bb=0.5, g_bi=1.5, g_ii=0.0, m_i=1.0, fermions=false, points=255, half_width=12.0))]
#[allow(clippy::too_many_arguments)]
fn sweep_pump(
    py: Python<'_>,
    detunings: Vec<f64>,
    omega: f64,
    n_b: usize,
    n_i: usize,
    g_bb: f64,
    g_bi: f64,
    g_ii: f64,
    m_i: f64,
    fermions: bool,
    points: usize,
    half_width: f64,
) -> PyResult<Vec<f64>> {
    let p = params(n_b, n_i, g_bb, g_bi, g_ii, m_i, fermions)?;
    let grids = MeanFieldGrids { bath_points: points, bath_half_width: half_width, imp_points: points, imp_half_width: half_width };
    let settings = SolverSettings { grids: Some(grids), ..SolverSettings::coupled() };
    let spec = py
        .detach(|| {
            let solver = PreparedSolver::prepare(&p, &settings)?;
            spectroscopy::sweep_pump(&solver, &detunings, omega, std::f64::consts::PI / omega)
        })
        .map_err(err)?;
    Ok(spec.fractions)
}

/// Boltzmann occupations of `n` particles.
#[pyfunction]
#[pyo3(signature = (energies, temperature, n=1))]
fn boltzmann_occupations(energies: Vec<f64>, temperature: f64, n: usize) -> PyResult<Vec<f64>> {
    Ok(eth::boltzmann_occupations(&energies, temperature, n).map_err(err)?.occupations)
}

/// Two identical fermions in the given levels.
#[pyfunction]
fn fermi_pair_occupations(energies: Vec<f64>, temperature: f64) -> PyResult<Vec<f64>> {
    Ok(eth::fermi_two_particle_occupations(&energies, temperature).map_err(err)?.occupations)
}

/// 1D coupling (SI) from a 3D scattering length (m), trap frequencies in rad/s and mass in kg.
#[pyfunction]
#[pyo3(signature = (a, omega, omega_perp, mass, ordered_pairs=false))]
fn g1d_from_scattering(a: f64, omega: f64, omega_perp: f64, mass: f64, ordered_pairs: bool) -> PyResult<f64> {
    let geo = TrapGeometry::new(omega, omega_perp).map_err(err)?;
    let conv = if ordered_pairs { Convention::OrderedPairs } else { Convention::Hamiltonian };
    dimred::g1d_from_scattering(a, &geo, mass, conv).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (g, omega, omega_perp, mass, ordered_pairs=false))]
fn scattering_from_g1d(g: f64, omega: f64, omega_perp: f64, mass: f64, ordered_pairs: bool) -> PyResult<f64> {
    let geo = TrapGeometry::new(omega, omega_perp).map_err(err)?;
    let conv = if ordered_pairs { Convention::OrderedPairs } else { Convention::Hamiltonian };
    dimred::scattering_from_g1d(g, &geo, mass, conv).map_err(err)
}

/// Parses a run config and returns it as a JSON string.
#[pyfunction]
fn load_config(path: std::path::PathBuf) -> PyResult<String> {
    let cfg = parse_config(&path).map_err(err)?;
    serde_json::to_string(&cfg).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn pps_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(lineshape, m)?)?;
    m.add_function(wrap_pyfunction!(tan_root, m)?)?;
    m.add_function(wrap_pyfunction!(side_peak_amplitude, m)?)?;
    m.add_function(wrap_pyfunction!(peak_locations, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lineshape, m)?)?;
    m.add_function(wrap_pyfunction!(thomas_fermi, m)?)?;
    m.add_function(wrap_pyfunction!(relax_bath, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_pump, m)?)?;
    m.add_function(wrap_pyfunction!(boltzmann_occupations, m)?)?;
    m.add_function(wrap_pyfunction!(fermi_pair_occupations, m)?)?;
    m.add_function(wrap_pyfunction!(g1d_from_scattering, m)?)?;
    m.add_function(wrap_pyfunction!(scattering_from_g1d, m)?)?;
    m.add_function(wrap_pyfunction!(load_config, m)?)?;
    Ok(())
}
