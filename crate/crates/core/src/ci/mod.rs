//! Exact few-body treatment in a fixed orbital basis: Fock bases, sparse
//! Hamiltonians, Lanczos ground states, Krylov propagation and Schmidt spectra.

mod basis;
mod hamiltonian;
mod lanczos;
mod sparse;
#[cfg(test)]
mod tests;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coupled::{one_body_orbitals, PulseSpec};
use crate::error::{Error, Result};
use crate::grid::{Grid, C64};
use crate::observables::{OneBodyDensityMatrix, Species};
use crate::params::{Statistics, SystemParams};

pub use basis::{annihilate, create, hop, multiset_count, FockBasis, Occupation, DEFAULT_CAP};
pub use hamiltonian::{assemble_parts, ContactTensor, Couplings, HamiltonianParts};
pub use lanczos::{krylov_propagate, lowest_eigenpair, mask_projector, scrambled_start, KrylovOptions};
pub use sparse::CsrMatrix;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Grid and truncation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiConfig {
    /// DVR points used for orbitals and contact integrals.
    pub grid_points: usize,
    pub half_width: f64,
    pub d_b: usize,
    pub d_i: usize,
    /// Restricts the basis to a fixed number of up impurities.
    #[serde(default)]
    pub spin_filter: Option<usize>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_CAP
}

impl Default for CiConfig {
    fn default() -> Self {
        Self { grid_points: 128, half_width: 10.0, d_b: 4, d_i: 6, spin_filter: None, cap: DEFAULT_CAP }
    }
}

impl CiConfig {
    /// Defaults scaled to the bath size: four bath orbitals up to four atoms, three beyond.
    pub fn for_params(params: &SystemParams) -> Self {
        let d_b = if params.n_b <= 4 { 4 } else { 3 };
        Self { d_b, ..Self::default() }
    }
}

/// Amplitudes over a `FockBasis`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManyBodyState {
    pub amps: Vec<C64>,
    pub time: f64,
}

impl ManyBodyState {
    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &ManyBodyState) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n < 1e-12 {
            return Err(Error::EmptyProjection(n * n));
        }
        self.amps.iter_mut().for_each(|z| *z /= n);
        Ok(self)
    }
}

/// Everything needed to work with one few-body system.
#[derive(Clone, Debug)]
pub struct CiSystem {
    pub params: SystemParams,
    pub config: CiConfig,
    pub grid: Arc<Grid>,
    pub basis: FockBasis,
    /// Orbital values on the grid, `sum phi^2 dx = 1`.
    pub bath_orbitals: Vec<Vec<f64>>,
    pub imp_orbitals: Vec<Vec<f64>>,
    pub bath_energies: Vec<f64>,
    pub imp_energies: Vec<f64>,
    pub parts: HamiltonianParts,
}

fn real_orbitals(grid: &Grid, mass: f64, omega: f64, d: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if d > grid.len() {
        return Err(Error::InvalidParameter(format!("{d} orbitals requested from a {}-point grid", grid.len())));
    }
    let (o, e) = one_body_orbitals(grid, mass, omega, None, d)?;
    Ok((o.into_iter().map(|v| v.into_iter().map(|z| z.re).collect()).collect(), e))
}

impl CiSystem {
    pub fn new(params: &SystemParams, config: &CiConfig) -> Result<Self> {
        params.validate_physical()?;
        if !(1..=4).contains(&params.n_i) {
            return Err(Error::InvalidParameter(format!("few-body solver handles 1 to 4 impurities, got {}", params.n_i)));
        }
        let grid = Arc::new(Grid::sine_dvr(config.grid_points, -config.half_width, config.half_width)?);
        let basis = FockBasis::new(
            params.n_b,
            config.d_b,
            params.n_i,
            config.d_i,
            params.statistics,
            config.spin_filter,
            config.cap,
        )?;
        let (bath_orbitals, bath_energies) = real_orbitals(&grid, params.m_b, params.omega, config.d_b)?;
        let (imp_orbitals, imp_energies) = real_orbitals(&grid, params.m_i, params.omega, config.d_i)?;
        let parts = assemble_parts(
            &basis,
            &bath_orbitals,
            &bath_energies,
            &imp_orbitals,
            &imp_energies,
            grid.dx(),
            &Couplings { g_bb: params.g_bb, g_bi: params.g_bi, g_ii: params.g_ii },
        )?;
        Ok(Self {
            params: params.clone(),
            config: config.clone(),
            grid,
            basis,
            bath_orbitals,
            imp_orbitals,
            bath_energies,
            imp_energies,
            parts,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn hamiltonian(&self, pulse: &PulseSpec) -> Result<CsrMatrix> {
        self.parts.with_pulse(pulse)
    }

    /// Lowest undriven state with exactly `n_up` up impurities.
    pub fn ground_state(&self, n_up: usize) -> Result<(f64, ManyBodyState)> {
        let mask: Vec<bool> = (0..self.dim()).map(|r| self.basis.n_up(self.basis.split(r).1) == n_up).collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidParameter(format!("no basis states with {n_up} up impurities")));
        }
        let (e, v) = lowest_eigenpair(&self.parts.h0, None, Some(&mask_projector(&mask)), 1e-10)?;
        Ok((e, ManyBodyState { amps: v.into_iter().map(|x| C64::new(x, 0.0)).collect(), time: 0.0 }))
    }

    /// Undriven ground state with all impurities spin down.
    pub fn initial_state(&self) -> Result<ManyBodyState> {
        Ok(self.ground_state(0)?.1)
    }

    fn check(&self, s: &ManyBodyState) -> Result<()> {
        if s.amps.len() != self.dim() {
            return Err(Error::ShapeMismatch(format!("state has {} amplitudes, basis {}", s.amps.len(), self.dim())));
        }
        Ok(())
    }

    /// Evolves through `pulse` in steps of at most `dt`; `observer` sees the
    /// initial state, every `stride` in time, and the final state.
    pub fn evolve(
        &self,
        state: &ManyBodyState,
        pulse: &PulseSpec,
        dt: f64,
        stride: f64,
        mut observer: impl FnMut(&ManyBodyState) -> Result<()>,
    ) -> Result<ManyBodyState> {
        self.check(state)?;
        let h = self.hamiltonian(pulse)?;
        let steps = ((pulse.duration / dt) - 1e-9).ceil().max(1.0) as usize;
        let h_dt = pulse.duration / steps as f64;
        let every = ((stride / h_dt).round() as usize).max(1);
        let opts = KrylovOptions::default();
        let mut cur = state.clone();
        let t0 = cur.time;
        let n0 = cur.norm();
        observer(&cur)?;
        for s in 1..=steps {
            cur.amps = krylov_propagate(&h, &cur.amps, h_dt, &opts)?;
            cur.time = t0 + s as f64 * h_dt;
            if s % every == 0 || s == steps {
                let drift = (cur.norm() - n0).abs();
                if drift > 1e-9 {
                    return Err(Error::NormDrift { step: s, time: cur.time, drift });
                }
                observer(&cur)?;
            }
        }
        Ok(cur)
    }

    /// `(<N_up>, <N_down>)`.
    pub fn spin_populations(&self, s: &ManyBodyState) -> (f64, f64) {
        let mut up = 0.0;
        for (r, z) in s.amps.iter().enumerate() {
            up += z.norm_sqr() * self.basis.n_up(self.basis.split(r).1) as f64;
        }
        let total: f64 = s.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.params.n_i as f64;
        (up, total - up)
    }

    fn n_down(&self, r: usize) -> usize {
        self.params.n_i - self.basis.n_up(self.basis.split(r).1)
    }

    /// Removes every configuration holding a spin-down impurity.
    pub fn blast_project(&self, s: &ManyBodyState) -> Result<ManyBodyState> {
        self.check(s)?;
        let mut out = s.clone();
        for (r, z) in out.amps.iter_mut().enumerate() {
            if self.n_down(r) > 0 {
                *z = ZERO;
            }
        }
        out.normalized()
    }

    /// Amplitude loss `exp(-gamma t_b)` per spin-down impurity, then renormalisation.
    pub fn blast_dissipative(&self, s: &ManyBodyState, gamma: f64, t_b: f64) -> Result<ManyBodyState> {
        self.check(s)?;
        if !(gamma > 0.0) || !(t_b > 0.0) {
            return Err(Error::InvalidParameter(format!("blast needs positive rate and time, got {gamma}, {t_b}")));
        }
        let f = (-gamma * t_b).exp();
        let mut out = s.clone();
        for (r, z) in out.amps.iter_mut().enumerate() {
            *z *= f.powi(self.n_down(r) as i32);
        }
        out.normalized()
    }

    pub fn energy(&self, s: &ManyBodyState, pulse: &PulseSpec) -> Result<f64> {
        self.check(s)?;
        Ok(self.hamiltonian(pulse)?.expectation(&s.amps))
    }

    /// `<H_BI>`.
    pub fn interspecies_energy(&self, s: &ManyBodyState) -> f64 {
        self.parts.h_bi.expectation(&s.amps)
    }

    /// Bath `<b†_i b_j>` in the orbital basis.
    pub fn bath_orbital_matrix(&self, s: &ManyBodyState) -> DMatrix<C64> {
        let d = self.basis.d_b;
        let di = self.basis.imp_dim();
        let mut m = DMatrix::from_element(d, d, ZERO);
        for (b, occ) in self.basis.bath_states().iter().enumerate() {
            for j in (0..d).filter(|&j| occ[j] > 0) {
                for i in 0..d {
                    let Some((o2, f)) = hop(occ, i, j, Statistics::Boson) else { continue };
                    let b2 = self.basis.bath_index(&o2).unwrap();
                    let mut acc = ZERO;
                    for k in 0..di {
                        acc += s.amps[b2 * di + k].conj() * s.amps[b * di + k];
                    }
                    m[(i, j)] += acc * f;
                }
            }
        }
        m
    }

    /// Impurity `<a†_{k s} a_{l s}>` for one spin in the orbital basis.
    pub fn imp_orbital_matrix(&self, s: &ManyBodyState, up: bool) -> DMatrix<C64> {
        let d = self.basis.d_i;
        let off = if up { 0 } else { d };
        let di = self.basis.imp_dim();
        let db = self.basis.bath_dim();
        let mut m = DMatrix::from_element(d, d, ZERO);
        for (i, occ) in self.basis.imp_states().iter().enumerate() {
            for l in (0..d).filter(|&l| occ[l + off] > 0) {
                for k in 0..d {
                    let Some((o2, f)) = hop(occ, k + off, l + off, self.basis.statistics) else { continue };
                    let i2 = self.basis.imp_index(&o2).unwrap();
                    let mut acc = ZERO;
                    for b in 0..db {
                        acc += s.amps[b * di + i2].conj() * s.amps[b * di + i];
                    }
                    m[(k, l)] += acc * f;
                }
            }
        }
        m
    }

    /// Grid one-body density matrix `rho(x, x') = sum phi_k(x) phi_l(x') <c†_l c_k>`.
    pub fn one_body_density_matrix(&self, s: &ManyBodyState, species: Species) -> OneBodyDensityMatrix {
        let (orb_m, orbs) = match species {
            Species::Bath => (self.bath_orbital_matrix(s), &self.bath_orbitals),
            Species::Up => (self.imp_orbital_matrix(s, true), &self.imp_orbitals),
            Species::Down => (self.imp_orbital_matrix(s, false), &self.imp_orbitals),
        };
        let n = self.grid.len();
        let d = orbs.len();
        let phi = DMatrix::from_fn(n, d, |x, k| C64::new(orbs[k][x], 0.0));
        // <c†_l c_k> indexed (l, k) -> transpose to put k on rows
        let matrix = &phi * orb_m.transpose() * phi.transpose();
        OneBodyDensityMatrix { species, grid: self.grid.clone(), matrix, time: s.time }
    }

    pub fn density(&self, s: &ManyBodyState, species: Species) -> Vec<f64> {
        self.one_body_density_matrix(s, species).diagonal()
    }

    /// Natural species populations of the bath|impurity cut, descending, summing to one.
    pub fn schmidt_spectrum(&self, s: &ManyBodyState) -> Result<Vec<f64>> {
        self.check(s)?;
        schmidt_decompose(&s.amps, self.basis.bath_dim(), self.basis.imp_dim())
    }

    /// Moves every impurity from spin down to spin up. Only defined for
    /// states without spin-up components.
    pub fn flip_down_to_up(&self, s: &ManyBodyState) -> Result<ManyBodyState> {
        self.check(s)?;
        let d = self.basis.d_i;
        let di = self.basis.imp_dim();
        let mut out = ManyBodyState { amps: vec![ZERO; s.amps.len()], time: s.time };
        for (r, z) in s.amps.iter().enumerate() {
            if z.norm_sqr() == 0.0 {
                continue;
            }
            let (b, i) = self.basis.split(r);
            let occ = &self.basis.imp_states()[i];
            if occ[..d].iter().any(|&n| n > 0) {
                return Err(Error::Unsupported("flip requires a fully spin-down state".into()));
            }
            let mut o2 = occ.clone();
            for k in 0..d {
                o2[k] = occ[k + d];
                o2[k + d] = 0;
            }
            let i2 = self.basis.imp_index(&o2).ok_or_else(|| Error::Unsupported("flipped state outside the basis".into()))?;
            out.amps[b * di + i2] = *z;
        }
        Ok(out)
    }

    /// `|<flip(psi_down(t)) | psi_up(t)>|` for the undriven evolution of the
    /// flipped initial state against the non-interacting reference.
    pub fn structure_factor(&self, initial: &ManyBodyState, t_max: f64, dt: f64, stride: f64) -> Result<Vec<(f64, f64)>> {
        let up0 = self.flip_down_to_up(initial)?;
        let mut up_series = Vec::new();
        let mut down_series = Vec::new();
        if t_max <= 0.0 {
            return Ok(vec![(0.0, up0.inner(&up0).norm())]);
        }
        let dark = PulseSpec::dark(t_max);
        let mut start_up = up0;
        start_up.time = 0.0;
        let mut start_down = initial.clone();
        start_down.time = 0.0;
        self.evolve(&start_up, &dark, dt, stride, |s| {
            up_series.push(s.clone());
            Ok(())
        })?;
        self.evolve(&start_down, &dark, dt, stride, |s| {
            down_series.push(s.clone());
            Ok(())
        })?;
        up_series
            .iter()
            .zip(&down_series)
            .map(|(u, d)| Ok((u.time, self.flip_down_to_up(d)?.inner(u).norm())))
            .collect()
    }
}

/// Squared singular values of the amplitude matrix reshaped as `rows x cols`.
pub fn schmidt_decompose(amps: &[C64], rows: usize, cols: usize) -> Result<Vec<f64>> {
    if amps.len() != rows * cols {
        return Err(Error::ShapeMismatch(format!("{} amplitudes for a {rows}x{cols} cut", amps.len())));
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| amps[i * cols + j]);
    let sv = m.singular_values();
    let mut l: Vec<f64> = sv.iter().map(|s| s * s).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = l.iter().sum();
    if total > 0.0 {
        l.iter_mut().for_each(|x| *x /= total);
    }
    Ok(l)
}

/// Normalised absolute deviation `sum |a - b| / sum a` between two coherence maps.
pub fn convergence_deviation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let den: f64 = a.iter().sum();
    if !(den > 0.0) {
        return Err(Error::InvalidParameter("reference coherence integrates to zero".into()));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / den)
}
