//! Thermal description of relaxed impurities: effective single-particle
//! Hamiltonian from the averaged bath density, canonical occupations for one
//! or two particles, Gibbs one-body density matrices and temperature fits.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{harmonic_potential, kinetic_matrix, sorted_eigen, Grid, C64};
use crate::observables::OneBodyDensityMatrix;
use crate::params::{Statistics, SystemParams};

/// Which levels of the effective Hamiltonian are kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub max_states: usize,
    pub max_energy: f64,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { max_states: 200, max_energy: 100.0 }
    }
}

/// Trap plus `g_BI * rho_bar_B` for one impurity, diagonalised on a grid.
#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub grid: Arc<Grid>,
    pub potential: Vec<f64>,
    /// Kept eigenvalues, ascending.
    pub energies: Vec<f64>,
    /// Kept eigenvectors as grid functions with `sum phi^2 dx = 1`.
    pub states: Vec<Vec<f64>>,
    /// Eigenvalues beyond the truncation, kept to report tail weight.
    pub discarded: Vec<f64>,
    /// Indices `i` with `e[i+1] - e[i] < 1e-8`.
    pub near_degenerate: Vec<usize>,
}

pub fn effective_hamiltonian(
    grid: Arc<Grid>,
    rho_bar_b: &[f64],
    params: &SystemParams,
    truncation: &Truncation,
) -> Result<EffectiveHamiltonian> {
    if rho_bar_b.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!("density has {} points, grid {}", rho_bar_b.len(), grid.len())));
    }
    if rho_bar_b.iter().any(|&r| !(r >= -1e-12)) {
        return Err(Error::InvalidParameter("averaged bath density must be non-negative".into()));
    }
    params.validate_physical()?;
    let trap = harmonic_potential(&grid, params.m_i, params.omega)?;
    let v: Vec<f64> = trap
        .diagonal_values()
        .expect("trap is diagonal")
        .iter()
        .zip(rho_bar_b)
        .map(|(t, r)| t + params.g_bi * r.max(0.0))
        .collect();
    let mut h = kinetic_matrix(&grid, params.m_i)?.to_dense();
    for (i, x) in v.iter().enumerate() {
        h[(i, i)] += x;
    }
    let (ev, vecs) = sorted_eigen(h);
    let keep = ev
        .iter()
        .take(truncation.max_states)
        .take_while(|&&e| e < truncation.max_energy)
        .count()
        .max(1);
    let s = 1.0 / grid.dx().sqrt();
    let states = (0..keep).map(|k| vecs.column(k).iter().map(|x| x * s).collect()).collect();
    let near_degenerate = (0..keep.saturating_sub(1)).filter(|&i| ev[i + 1] - ev[i] < 1e-8).collect();
    Ok(EffectiveHamiltonian {
        grid,
        potential: v,
        energies: ev[..keep].to_vec(),
        states,
        discarded: ev[keep..].to_vec(),
        near_degenerate,
    })
}

/// Occupation law used for the impurities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupationModel {
    /// `N` particles with Boltzmann weights (one particle, or two bosons).
    Boltzmann { n: usize },
    /// Two identical fermions in the canonical ensemble.
    TwoFermions,
}

impl OccupationModel {
    pub fn for_params(params: &SystemParams) -> Self {
        match (params.n_i, params.statistics) {
            (2, Statistics::Fermion) => Self::TwoFermions,
            (n, _) => Self::Boltzmann { n },
        }
    }

    pub fn particles(&self) -> usize {
        match self {
            Self::Boltzmann { n } => *n,
            Self::TwoFermions => 2,
        }
    }

    /// Lowest possible energy for the given spectrum.
    pub fn ground_energy(&self, energies: &[f64]) -> f64 {
        match self {
            Self::Boltzmann { n } => *n as f64 * energies[0],
            Self::TwoFermions => energies[0] + energies.get(1).copied().unwrap_or(f64::INFINITY),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationDistribution {
    pub model: OccupationModel,
    pub temperature: f64,
    pub occupations: Vec<f64>,
    /// `ln Z(1)` with energies measured from the lowest level.
    pub log_z1: f64,
    /// `ln Z(2)` (sum over ordered pairs of distinct levels), fermions only.
    pub log_z2: Option<f64>,
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {t}")));
    }
    Ok(())
}

/// Boltzmann occupations scaled to `n` particles. Infinite energies get zero weight.
pub fn boltzmann_occupations(energies: &[f64], temperature: f64, n: usize) -> Result<OccupationDistribution> {
    check_temperature(temperature)?;
    if energies.is_empty() {
        return Err(Error::InvalidParameter("no levels".into()));
    }
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let l: Vec<f64> = energies.iter().map(|e| -(e - e0) / temperature).collect();
    let lz = log_sum_exp(l.iter().copied());
    let occupations = l.iter().map(|x| n as f64 * (x - lz).exp()).collect();
    Ok(OccupationDistribution { model: OccupationModel::Boltzmann { n }, temperature, occupations, log_z1: lz, log_z2: None })
}

/// Two-fermion canonical occupations `n_i = 2 x_i (Z1 - x_i) / Z(2)`,
/// `x_i = exp(-e_i / T)`, `Z(2) = sum_j x_j (Z1 - x_j)`, evaluated in log space.
pub fn fermi_two_particle_occupations(energies: &[f64], temperature: f64) -> Result<OccupationDistribution> {
    check_temperature(temperature)?;
    if energies.len() < 2 {
        return Err(Error::InvalidParameter("two fermions need at least two levels".into()));
    }
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let l: Vec<f64> = energies.iter().map(|e| -(e - e0) / temperature).collect();
    let lz = log_sum_exp(l.iter().copied());
    // ln(Z1 - x_i): for the dominant levels sum the others directly to avoid cancellation
    let others = |i: usize| -> f64 {
        let li = l[i];
        if (lz - li) > 0.5 {
            lz + (-(li - lz).exp()).ln_1p()
        } else {
            log_sum_exp(l.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x))
        }
    };
    let la: Vec<f64> = (0..l.len()).map(|i| l[i] + others(i)).collect();
    let lz2 = log_sum_exp(la.iter().copied());
    let occupations = la.iter().map(|a| 2.0 * (a - lz2).exp()).collect();
    Ok(OccupationDistribution {
        model: OccupationModel::TwoFermions,
        temperature,
        occupations,
        log_z1: lz,
        log_z2: Some(lz2),
    })
}

pub fn occupations(model: OccupationModel, energies: &[f64], temperature: f64) -> Result<OccupationDistribution> {
    match model {
        OccupationModel::Boltzmann { n } => boltzmann_occupations(energies, temperature, n),
        OccupationModel::TwoFermions => fermi_two_particle_occupations(energies, temperature),
    }
}

impl EffectiveHamiltonian {
    /// Occupation weight that would sit in the discarded levels.
    pub fn tail_weight(&self, model: OccupationModel, temperature: f64) -> Result<f64> {
        if self.discarded.is_empty() {
            return Ok(0.0);
        }
        let all: Vec<f64> = self.energies.iter().chain(&self.discarded).copied().collect();
        let d = occupations(model, &all, temperature)?;
        Ok(d.occupations[self.energies.len()..].iter().sum())
    }

    /// `sum n_i phi_i(x) phi_i(x')`.
    pub fn gibbs_density_matrix(&self, dist: &OccupationDistribution) -> Result<OneBodyDensityMatrix> {
        if dist.occupations.len() != self.states.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} occupations for {} states",
                dist.occupations.len(),
                self.states.len()
            )));
        }
        let n = self.grid.len();
        let k = self.states.len();
        let phi = DMatrix::from_fn(n, k, |x, i| self.states[i][x]);
        let scaled = DMatrix::from_fn(n, k, |x, i| self.states[i][x] * dist.occupations[i]);
        let m = scaled * phi.transpose();
        Ok(OneBodyDensityMatrix {
            species: crate::observables::Species::Up,
            grid: self.grid.clone(),
            matrix: m.map(|v| C64::new(v, 0.0)),
            time: f64::NAN,
        })
    }

    /// `Tr[rho_Gibbs H_eff] = sum n_i e_i`.
    pub fn thermal_energy(&self, model: OccupationModel, temperature: f64) -> Result<f64> {
        let d = occupations(model, &self.energies, temperature)?;
        Ok(d.occupations.iter().zip(&self.energies).map(|(n, e)| n * e).sum())
    }

    /// Projections `c_i = <phi_i| Re rho |phi_i>` with `dx` weights, and `||rho dx||_F^2`.
    fn projections(&self, rho: &OneBodyDensityMatrix) -> Result<(Vec<f64>, f64)> {
        if !rho.grid.same_as(&self.grid) {
            return Err(Error::ShapeMismatch("density matrix and Hamiltonian use different grids".into()));
        }
        let dx = self.grid.dx();
        let re = rho.matrix.map(|z| z.re * dx);
        let norm2 = rho.matrix.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx;
        let n = self.grid.len();
        let c = self
            .states
            .iter()
            .map(|phi| {
                let v = nalgebra::DVector::from_iterator(n, phi.iter().map(|p| p * dx.sqrt()));
                (v.transpose() * &re * &v)[(0, 0)]
            })
            .collect();
        Ok((c, norm2))
    }
}

/// Result of fitting a Gibbs density matrix to a measured one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    pub temperature: f64,
    /// `||rho - rho_Gibbs||_F / ||rho||_F` at the optimum.
    pub residual: f64,
    /// False when the best temperature sits on the edge of the scanned range.
    pub bracketed: bool,
}

/// Scan range of the temperature fit.
pub const FIT_RANGE: (f64, f64) = (0.05, 200.0);

/// Frobenius-norm fit of `T` by a logarithmic scan followed by golden-section
/// refinement to `1e-3`.
pub fn fit_temperature(rho: &OneBodyDensityMatrix, h: &EffectiveHamiltonian, model: OccupationModel) -> Result<TemperatureFit> {
    if rho.hermiticity_residual() > 1e-8 * rho.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300) {
        return Err(Error::SymmetryViolation(rho.hermiticity_residual()));
    }
    let (c, norm2) = h.projections(rho)?;
    if !(norm2 > 0.0) {
        return Err(Error::InvalidParameter("density matrix vanishes".into()));
    }
    let cost = |t: f64| -> Result<f64> {
        let d = occupations(model, &h.energies, t)?;
        let v: f64 = d.occupations.iter().zip(&c).map(|(n, ci)| n * n - 2.0 * n * ci).sum();
        Ok((norm2 + v).max(0.0))
    };
    let (lo, hi) = FIT_RANGE;
    let n = 240;
    let ts: Vec<f64> = (0..=n).map(|k| lo * (hi / lo).powf(k as f64 / n as f64)).collect();
    let vals = ts.iter().map(|&t| cost(t)).collect::<Result<Vec<_>>>()?;
    let k = (0..vals.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let bracketed = k > 0 && k < n;
    let (mut a, mut b) = (ts[k.saturating_sub(1)], ts[(k + 1).min(n)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (cost(x1)?, cost(x2)?);
    while b - a > 1e-4 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = cost(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = cost(x2)?;
        }
    }
    let mut t = 0.5 * (a + b);
    if vals[k] < cost(t)? {
        t = ts[k];
    }
    // the expanded cost loses precision near a perfect match; recompute directly
    let g = h.gibbs_density_matrix(&occupations(model, &h.energies, t)?)?;
    let diff: f64 = rho.matrix.iter().zip(g.matrix.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
    let total: f64 = rho.matrix.iter().map(|a| a.norm_sqr()).sum();
    Ok(TemperatureFit { temperature: t, residual: (diff / total).sqrt(), bracketed })
}

/// Solves `Tr[rho_Gibbs(T) H_eff] = energy` by bisection. Returns zero when
/// `energy` equals the ground energy of the model.
pub fn temperature_from_energy(energy: f64, h: &EffectiveHamiltonian, model: OccupationModel) -> Result<f64> {
    let e_min = model.ground_energy(&h.energies);
    let tol = 1e-12 * e_min.abs().max(1.0);
    if energy < e_min - tol {
        return Err(Error::InvalidParameter(format!("energy {energy} lies below the zero-point value {e_min}")));
    }
    if energy <= e_min + tol {
        return Ok(0.0);
    }
    let e_of = |t: f64| h.thermal_energy(model, t);
    let mut lo = 1e-4;
    if e_of(lo)? >= energy {
        return Ok(lo);
    }
    let mut hi = 1.0;
    while e_of(hi)? < energy {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::InvalidParameter(format!("energy {energy} exceeds what the kept levels can hold")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if e_of(mid)? < energy {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact canonical occupations of two identical bosons, for comparison with
/// the Boltzmann form.
pub fn bose_two_particle_occupations(energies: &[f64], temperature: f64) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let e0 = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let x: Vec<f64> = energies.iter().map(|e| (-(e - e0) / temperature).exp()).collect();
    let z1: f64 = x.iter().sum();
    let z1_2: f64 = x.iter().map(|v| v * v).sum();
    // Z = (Z1^2 + Z1(2T)) / 2 ; <n_i> = x_i (Z1 + x_i) / Z
    let z = 0.5 * (z1 * z1 + z1_2);
    Ok(x.iter().map(|v| v * (z1 + v) / z).collect())
}
