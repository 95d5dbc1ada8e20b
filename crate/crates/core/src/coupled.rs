//! Spinor impurities coupled to the mean-field bath: radiofrequency pulses,
//! optical blast and the two-way coupled split-step evolution.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{harmonic_potential, kinetic_matrix, sorted_eigen, Grid, KineticPropagator, LinearInterp, C64};
use crate::meanfield::{BathField, GpHamiltonian, GpPropagator, Splitting};
use crate::params::{Statistics, SystemParams};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PulseLabel {
    Pump,
    Dark,
    Probe,
}

/// One rectangular radiofrequency pulse.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub label: PulseLabel,
    /// Bare Rabi frequency.
    pub omega_r0: f64,
    pub detuning: f64,
    pub duration: f64,
}

impl PulseSpec {
    pub fn pump(omega_r0: f64, detuning: f64, duration: f64) -> Self {
        Self { label: PulseLabel::Pump, omega_r0, detuning, duration }
    }

    pub fn probe(omega_r0: f64, detuning: f64, duration: f64) -> Self {
        Self { label: PulseLabel::Probe, omega_r0, detuning, duration }
    }

    pub fn dark(duration: f64) -> Self {
        Self { label: PulseLabel::Dark, omega_r0: 0.0, detuning: 0.0, duration }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::InvalidParameter(format!("pulse duration must be positive, got {}", self.duration)));
        }
        if self.label == PulseLabel::Dark && self.omega_r0 != 0.0 {
            return Err(Error::InvalidParameter("dark pulses carry no drive".into()));
        }
        if !self.omega_r0.is_finite() || !self.detuning.is_finite() {
            return Err(Error::InvalidParameter("pulse parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Single-spin drive `[[-D/2, W/2], [W/2, D/2]]` in the (up, down) basis.
fn spin_matrix(pulse: &PulseSpec) -> [[f64; 2]; 2] {
    let (w, d) = (0.5 * pulse.omega_r0, 0.5 * pulse.detuning);
    [[-d, w], [w, d]]
}

/// Collective spin Hamiltonian on the product basis of `n_i` spins, ordered
/// (up), (down) for one spin and (uu, ud, du, dd) for two.
pub fn build_rf_hamiltonian(pulse: &PulseSpec, n_i: usize) -> Result<DMatrix<f64>> {
    let s = spin_matrix(pulse);
    let single = DMatrix::from_fn(2, 2, |i, j| s[i][j]);
    match n_i {
        1 => Ok(single),
        2 => {
            let id = DMatrix::<f64>::identity(2, 2);
            Ok(single.kronecker(&id) + id.kronecker(&single))
        }
        n => Err(Error::InvalidParameter(format!("n_i must be 1 or 2, got {n}"))),
    }
}

/// `exp(-i h tau)` for a real symmetric 2x2 matrix `[[a, c], [c, b]]`.
fn expm_2x2(a: f64, b: f64, c: f64, tau: f64) -> [[C64; 2]; 2] {
    let m = 0.5 * (a + b);
    let d = 0.5 * (a - b);
    let r = (d * d + c * c).sqrt();
    let ph = C64::from_polar(1.0, -m * tau);
    let (cs, sn) = ((r * tau).cos(), (r * tau).sin());
    let (sd, sc) = if r > 0.0 { (sn * d / r, sn * c / r) } else { (0.0, 0.0) };
    [
        [ph * C64::new(cs, -sd), ph * C64::new(0.0, -sc)],
        [ph * C64::new(0.0, -sc), ph * C64::new(cs, sd)],
    ]
}

/// Spinor impurity wavefunction on its own grid. Pair components are stored
/// row-major over `(x1, x2)` in the order (uu, ud, du, dd).
#[derive(Clone, Debug)]
pub enum ImpurityState {
    Single { grid: Arc<Grid>, up: Vec<C64>, down: Vec<C64> },
    Pair { grid: Arc<Grid>, statistics: Statistics, comps: [Vec<C64>; 4] },
}

pub const UU: usize = 0;
pub const UD: usize = 1;
pub const DU: usize = 2;
pub const DD: usize = 3;

/// Spin orientation used when preparing states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spin {
    Up,
    Down,
}

impl ImpurityState {
    pub fn grid(&self) -> &Arc<Grid> {
        match self {
            ImpurityState::Single { grid, .. } | ImpurityState::Pair { grid, .. } => grid,
        }
    }

    pub fn n_particles(&self) -> usize {
        match self {
            ImpurityState::Single { .. } => 1,
            ImpurityState::Pair { .. } => 2,
        }
    }

    /// Lowest state of the trap plus `potential` with every spin set to `spin`.
    pub fn ground_state(params: &SystemParams, grid: Arc<Grid>, potential: Option<&[f64]>, spin: Spin) -> Result<Self> {
        params.validate()?;
        let (orbitals, _) = one_body_orbitals(&grid, params.m_i, params.omega, potential, 2)?;
        let phi0 = &orbitals[0];
        match params.n_i {
            1 => {
                let zeros = vec![ZERO; grid.len()];
                let (up, down) = match spin {
                    Spin::Up => (phi0.clone(), zeros),
                    Spin::Down => (zeros, phi0.clone()),
                };
                Ok(ImpurityState::Single { grid, up, down })
            }
            _ => {
                let m = grid.len();
                let spatial = if params.g_ii == 0.0 {
                    let phi1 = &orbitals[1];
                    let mut f = vec![ZERO; m * m];
                    for i in 0..m {
                        for j in 0..m {
                            f[i * m + j] = match params.statistics {
                                Statistics::Boson => phi0[i] * phi0[j],
                                Statistics::Fermion => (phi0[i] * phi1[j] - phi1[i] * phi0[j]) / 2f64.sqrt(),
                            };
                        }
                    }
                    f
                } else {
                    pair_ground_state(&grid, params.m_i, params.omega, potential, params.g_ii, params.statistics)?
                };
                let mut comps = [vec![ZERO; m * m], vec![ZERO; m * m], vec![ZERO; m * m], vec![ZERO; m * m]];
                comps[if spin == Spin::Up { UU } else { DD }] = spatial;
                Ok(ImpurityState::Pair { grid, statistics: params.statistics, comps })
            }
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            ImpurityState::Single { grid, up, down } => grid.norm_sqr(up) + grid.norm_sqr(down),
            ImpurityState::Pair { grid, comps, .. } => {
                comps.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>() * grid.dx().powi(2)
            }
        }
    }

    fn comp_norms(&self) -> Vec<f64> {
        match self {
            ImpurityState::Single { grid, up, down } => vec![grid.norm_sqr(up), grid.norm_sqr(down)],
            ImpurityState::Pair { grid, comps, .. } => {
                let w = grid.dx().powi(2);
                comps.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>() * w).collect()
            }
        }
    }

    /// Expected numbers of up and down impurities.
    pub fn spin_populations(&self) -> (f64, f64) {
        let n = self.comp_norms();
        match self {
            ImpurityState::Single { .. } => (n[0], n[1]),
            ImpurityState::Pair { .. } => (2.0 * n[UU] + n[UD] + n[DU], 2.0 * n[DD] + n[UD] + n[DU]),
        }
    }

    /// One-body density of the given spin on the impurity grid.
    pub fn density(&self, spin: Spin) -> Vec<f64> {
        match self {
            ImpurityState::Single { up, down, .. } => {
                let v = if spin == Spin::Up { up } else { down };
                v.iter().map(|z| z.norm_sqr()).collect()
            }
            ImpurityState::Pair { grid, comps, .. } => {
                let m = grid.len();
                let dx = grid.dx();
                // Particle 1 has spin s with partner spin s', and vice versa.
                let (same, first, second) = match spin {
                    Spin::Up => (UU, UD, DU),
                    Spin::Down => (DD, DU, UD),
                };
                let mut rho = vec![0.0; m];
                for i in 0..m {
                    for j in 0..m {
                        let a = comps[same][i * m + j].norm_sqr();
                        rho[i] += a + comps[first][i * m + j].norm_sqr();
                        rho[j] += a + comps[second][i * m + j].norm_sqr();
                    }
                }
                rho.iter_mut().for_each(|r| *r *= dx);
                rho
            }
        }
    }

    /// `max |Psi_{s1 s2}(x1, x2) - eps Psi_{s2 s1}(x2, x1)|`, normalised by the largest amplitude.
    pub fn symmetry_residual(&self) -> f64 {
        match self {
            ImpurityState::Single { .. } => 0.0,
            ImpurityState::Pair { grid, statistics, comps } => {
                let m = grid.len();
                let eps = if *statistics == Statistics::Boson { 1.0 } else { -1.0 };
                let scale = comps.iter().flat_map(|c| c.iter()).map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
                let pairs = [(UU, UU), (DD, DD), (UD, DU)];
                let mut worst: f64 = 0.0;
                for (a, b) in pairs {
                    for i in 0..m {
                        for j in 0..m {
                            let d = (comps[a][i * m + j] - comps[b][j * m + i] * eps).norm();
                            worst = worst.max(d);
                        }
                    }
                }
                worst / scale
            }
        }
    }

    fn scale(&mut self, s: f64) {
        match self {
            ImpurityState::Single { up, down, .. } => {
                up.iter_mut().chain(down.iter_mut()).for_each(|z| *z *= s);
            }
            ImpurityState::Pair { comps, .. } => comps.iter_mut().flat_map(|c| c.iter_mut()).for_each(|z| *z *= s),
        }
    }

    /// Applies a single-spin rotation `u` (acting on (up, down)) to every impurity.
    pub fn rotate_spins(&mut self, u: [[C64; 2]; 2]) {
        match self {
            ImpurityState::Single { up, down, .. } => {
                for (a, b) in up.iter_mut().zip(down.iter_mut()) {
                    let (x, y) = (*a, *b);
                    *a = u[0][0] * x + u[0][1] * y;
                    *b = u[1][0] * x + u[1][1] * y;
                }
            }
            ImpurityState::Pair { comps, .. } => {
                let n = comps[0].len();
                for k in 0..n {
                    let v = [comps[UU][k], comps[UD][k], comps[DU][k], comps[DD][k]];
                    let w = kron_apply(&u, &u, v);
                    for c in 0..4 {
                        comps[c][k] = w[c];
                    }
                }
            }
        }
    }
}

/// `(u1 (x) u2) v` on the (uu, ud, du, dd) basis.
fn kron_apply(u1: &[[C64; 2]; 2], u2: &[[C64; 2]; 2], v: [C64; 4]) -> [C64; 4] {
    // First index.
    let t = [
        u1[0][0] * v[UU] + u1[0][1] * v[DU],
        u1[0][0] * v[UD] + u1[0][1] * v[DD],
        u1[1][0] * v[UU] + u1[1][1] * v[DU],
        u1[1][0] * v[UD] + u1[1][1] * v[DD],
    ];
    // Second index.
    [
        u2[0][0] * t[UU] + u2[0][1] * t[UD],
        u2[1][0] * t[UU] + u2[1][1] * t[UD],
        u2[0][0] * t[DU] + u2[0][1] * t[DD],
        u2[1][0] * t[DU] + u2[1][1] * t[DD],
    ]
}

/// Lowest `count` one-body eigenstates of trap plus `potential`, normalised to `sum |phi|^2 dx = 1`.
pub fn one_body_orbitals(
    grid: &Grid,
    mass: f64,
    omega: f64,
    potential: Option<&[f64]>,
    count: usize,
) -> Result<(Vec<Vec<C64>>, Vec<f64>)> {
    let mut h = kinetic_matrix(grid, mass)?.add(&harmonic_potential(grid, mass, omega)?)?.to_dense();
    if let Some(v) = potential {
        if v.len() != grid.len() {
            return Err(Error::ShapeMismatch("potential length differs from grid".into()));
        }
        for (i, x) in v.iter().enumerate() {
            h[(i, i)] += x;
        }
    }
    let (ev, vecs) = sorted_eigen(h);
    let s = 1.0 / grid.dx().sqrt();
    let count = count.min(grid.len());
    let orbs = (0..count).map(|k| vecs.column(k).iter().map(|&v| C64::new(v * s, 0.0)).collect()).collect();
    Ok((orbs, ev[..count].to_vec()))
}

/// Interacting pair ground state by imaginary-time split-step with exchange projection.
fn pair_ground_state(
    grid: &Arc<Grid>,
    mass: f64,
    omega: f64,
    potential: Option<&[f64]>,
    g_ii: f64,
    statistics: Statistics,
) -> Result<Vec<C64>> {
    let m = grid.len();
    let dx = grid.dx();
    let (orbs, _) = one_body_orbitals(grid, mass, omega, potential, 2)?;
    let mut v = harmonic_potential(grid, mass, omega)?.diagonal_values().unwrap().to_vec();
    if let Some(p) = potential {
        v.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    let eps = if statistics == Statistics::Boson { 1.0 } else { -1.0 };
    let mut f = vec![ZERO; m * m];
    for i in 0..m {
        for j in 0..m {
            f[i * m + j] = match statistics {
                Statistics::Boson => orbs[0][i] * orbs[0][j],
                Statistics::Fermion => orbs[0][i] * orbs[1][j] - orbs[1][i] * orbs[0][j],
            };
        }
    }
    let energy = |f: &[C64], kin: &DMatrix<f64>| -> f64 {
        let mut e = 0.0;
        for i in 0..m {
            for j in 0..m {
                let z = f[i * m + j];
                let mut tz = ZERO;
                for k in 0..m {
                    tz += f[k * m + j] * kin[(i, k)] + f[i * m + k] * kin[(j, k)];
                }
                let mut pot = v[i] + v[j];
                if i == j {
                    pot += g_ii / dx;
                }
                e += (z.conj() * tz).re + pot * z.norm_sqr();
            }
        }
        e * dx * dx
    };
    let kin = kinetic_matrix(grid, mass)?.to_dense();
    let mut tau = 0.02 / omega;
    let normalize = |f: &mut [C64]| {
        let n = (f.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx * dx).sqrt();
        f.iter_mut().for_each(|z| *z /= n);
    };
    normalize(&mut f);
    let mut e_old = energy(&f, &kin);
    for _round in 0..6 {
        let mut prop = KineticPropagator::imaginary(grid, mass, tau);
        let half: Vec<f64> = (0..m * m)
            .map(|k| {
                let (i, j) = (k / m, k % m);
                let mut p = v[i] + v[j];
                if i == j {
                    p += g_ii / dx;
                }
                (-p * tau * 0.5).exp()
            })
            .collect();
        for _ in 0..4000 {
            f.iter_mut().zip(&half).for_each(|(z, h)| *z *= h);
            prop.apply_2d(&mut f);
            f.iter_mut().zip(&half).for_each(|(z, h)| *z *= h);
            // Project onto the exchange sector.
            for i in 0..m {
                for j in i..m {
                    let a = f[i * m + j];
                    let b = f[j * m + i];
                    let s = 0.5 * (a + b * eps);
                    f[i * m + j] = s;
                    f[j * m + i] = s * eps;
                }
            }
            normalize(&mut f);
        }
        let e = energy(&f, &kin);
        if (e_old - e).abs() < 1e-12 && tau < 1e-3 {
            break;
        }
        e_old = e;
        tau *= 0.25;
    }
    Ok(f)
}

/// Bath and impurities at a common time.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub bath: BathField,
    pub imp: ImpurityState,
    pub time: f64,
}

impl CoupledState {
    /// Relaxed bath with all impurities in their spin-down trap ground state.
    pub fn initial(params: &SystemParams, bath: BathField, imp_grid: Arc<Grid>) -> Result<Self> {
        let imp = ImpurityState::ground_state(params, imp_grid, None, Spin::Down)?;
        Ok(Self { bath, imp, time: 0.0 })
    }
}

/// Projects out the spin-down impurity components and renormalises.
pub fn blast_project(state: &CoupledState) -> Result<CoupledState> {
    let mut out = state.clone();
    match &mut out.imp {
        ImpurityState::Single { down, .. } => down.iter_mut().for_each(|z| *z = ZERO),
        ImpurityState::Pair { comps, .. } => {
            for c in [UD, DU, DD] {
                comps[c].iter_mut().for_each(|z| *z = ZERO);
            }
        }
    }
    let n = out.imp.norm();
    if n < 1e-12 {
        return Err(Error::EmptyProjection(n));
    }
    out.imp.scale(1.0 / n.sqrt());
    Ok(out)
}

/// Loss of spin-down impurities at rate `gamma` for `t_b`, then renormalisation.
pub fn apply_blast_dissipative(state: &CoupledState, gamma: f64, t_b: f64) -> Result<CoupledState> {
    if !(gamma > 0.0) || !(t_b > 0.0) {
        return Err(Error::InvalidParameter(format!("blast needs positive rate and time, got {gamma}, {t_b}")));
    }
    let f = (-gamma * t_b).exp();
    let mut out = state.clone();
    match &mut out.imp {
        ImpurityState::Single { down, .. } => down.iter_mut().for_each(|z| *z *= f),
        ImpurityState::Pair { comps, .. } => {
            for c in [UD, DU] {
                comps[c].iter_mut().for_each(|z| *z *= f);
            }
            comps[DD].iter_mut().for_each(|z| *z *= f * f);
        }
    }
    let n = out.imp.norm();
    if n < 1e-300 {
        return Err(Error::EmptyProjection(n));
    }
    out.imp.scale(1.0 / n.sqrt());
    Ok(out)
}

/// Integration settings for coupled evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveOptions {
    pub dt: f64,
    /// Observer call spacing in time units.
    pub stride: f64,
    pub splitting: Splitting,
    /// Keeps the bath fixed (no back-action and no bath dynamics).
    pub frozen_bath: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { dt: 0.005, stride: 0.1, splitting: Splitting::Strang, frozen_bath: false }
    }
}

/// Energy split of a coupled mean-field state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    /// Bath kinetic + trap + intraspecies energy.
    pub bath: f64,
    /// Impurity kinetic + trap (both spins).
    pub impurity_free: f64,
    /// Bath-impurity interaction.
    pub interspecies: f64,
    /// Impurity-impurity contact energy.
    pub intra_impurity: f64,
    /// Expectation of the radiofrequency term.
    pub spin: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.bath + self.impurity_free + self.interspecies + self.intra_impurity + self.spin
    }
}

/// Coupled split-step integrator for one pulse.
pub struct CoupledPropagator {
    params: SystemParams,
    pulse: PulseSpec,
    dt: f64,
    weights: Vec<f64>,
    bath: GpPropagator,
    imp_kinetic: Vec<KineticPropagator>,
    imp_trap: Vec<f64>,
    bath_to_imp: LinearInterp,
    dx_ratio: f64,
    frozen: bool,
    active: [bool; 4],
}

impl CoupledPropagator {
    pub fn new(state: &CoupledState, params: &SystemParams, pulse: &PulseSpec, dt: f64, opts: &EvolveOptions) -> Result<Self> {
        pulse.validate()?;
        params.validate()?;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if state.imp.n_particles() != params.n_i {
            return Err(Error::ShapeMismatch("impurity state does not match n_i".into()));
        }
        let ig = state.imp.grid().clone();
        let weights = opts.splitting.weights();
        let bath = GpPropagator::new(params, state.bath.grid.clone(), dt, opts.splitting)?;
        let imp_kinetic = weights.iter().map(|w| KineticPropagator::new(&ig, params.m_i, w * dt)).collect();
        let imp_trap = harmonic_potential(&ig, params.m_i, params.omega)?.diagonal_values().unwrap().to_vec();
        let bath_to_imp = state.bath.grid.interpolation_to(&ig);
        let dx_ratio = ig.dx() / state.bath.grid.dx();
        let norms = state.imp.comp_norms();
        let mut active = [true; 4];
        if pulse.omega_r0 == 0.0 {
            for (a, n) in active.iter_mut().zip(&norms) {
                *a = *n > 0.0;
            }
        }
        Ok(Self {
            params: params.clone(),
            pulse: *pulse,
            dt,
            weights,
            bath,
            imp_kinetic,
            imp_trap,
            bath_to_imp,
            dx_ratio,
            frozen: opts.frozen_bath,
            active,
        })
    }

    /// Bath density seen by the impurities, on the impurity grid.
    pub fn bath_density_on_impurity_grid(&self, bath: &BathField) -> Vec<f64> {
        self.bath_to_imp.apply(&bath.density())
    }

    /// Back-action potential `g_BI rho_up` on the bath grid.
    fn back_action(&self, imp: &ImpurityState) -> Vec<f64> {
        let rho_up = imp.density(Spin::Up);
        let mut v = self.bath_to_imp.apply_transpose(&rho_up);
        let s = self.params.g_bi * self.dx_ratio;
        v.iter_mut().for_each(|x| *x *= s);
        v
    }

    fn impurity_local(&self, imp: &mut ImpurityState, rho_b: &[f64], h: f64) {
        let spin = spin_matrix(&self.pulse);
        let g = self.params.g_bi;
        let units: Vec<[[C64; 2]; 2]> = self
            .imp_trap
            .iter()
            .zip(rho_b)
            .map(|(v, r)| expm_2x2(v + g * r + spin[0][0], v + spin[1][1], spin[0][1], h))
            .collect();
        match imp {
            ImpurityState::Single { up, down, .. } => {
                for ((a, b), u) in up.iter_mut().zip(down.iter_mut()).zip(&units) {
                    let (x, y) = (*a, *b);
                    *a = u[0][0] * x + u[0][1] * y;
                    *b = u[1][0] * x + u[1][1] * y;
                }
            }
            ImpurityState::Pair { grid, comps, .. } => {
                let m = grid.len();
                let contact = C64::from_polar(1.0, -self.params.g_ii / grid.dx() * h);
                if self.pulse.omega_r0 == 0.0 {
                    // Diagonal in spin: independent phase per component.
                    let diag = |s: usize, k: usize| units[k][s][s];
                    for (c, (s1, s2)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                        if !self.active[c] {
                            continue;
                        }
                        for i in 0..m {
                            let a = diag(s1, i);
                            let row = &mut comps[c][i * m..(i + 1) * m];
                            for (j, z) in row.iter_mut().enumerate() {
                                *z *= a * diag(s2, j);
                            }
                            if self.params.g_ii != 0.0 {
                                row[i] *= contact;
                            }
                        }
                    }
                } else {
                    for i in 0..m {
                        for j in 0..m {
                            let k = i * m + j;
                            let v = [comps[UU][k], comps[UD][k], comps[DU][k], comps[DD][k]];
                            let mut w = kron_apply(&units[i], &units[j], v);
                            if i == j && self.params.g_ii != 0.0 {
                                w.iter_mut().for_each(|z| *z *= contact);
                            }
                            for c in 0..4 {
                                comps[c][k] = w[c];
                            }
                        }
                    }
                }
            }
        }
    }

    fn impurity_kinetic(&mut self, imp: &mut ImpurityState, k: usize) {
        let prop = &mut self.imp_kinetic[k];
        match imp {
            ImpurityState::Single { up, down, .. } => {
                if self.active[0] {
                    prop.apply(up);
                }
                if self.active[1] {
                    prop.apply(down);
                }
            }
            ImpurityState::Pair { comps, .. } => {
                for (c, comp) in comps.iter_mut().enumerate() {
                    if self.active[c] {
                        prop.apply_2d(comp);
                    }
                }
            }
        }
    }

    /// Advances the state by one time step.
    pub fn step(&mut self, state: &mut CoupledState) {
        for k in 0..self.weights.len() {
            let h = 0.5 * self.weights[k] * self.dt;
            if !self.frozen {
                let v = self.back_action(&state.imp);
                self.bath.local(&mut state.bath.psi, Some(&v), h);
            }
            let rho_b = self.bath_density_on_impurity_grid(&state.bath);
            self.impurity_local(&mut state.imp, &rho_b, h);
            if !self.frozen {
                self.bath.kinetic(&mut state.bath.psi, k);
            }
            self.impurity_kinetic(&mut state.imp, k);
            let rho_b = self.bath_density_on_impurity_grid(&state.bath);
            self.impurity_local(&mut state.imp, &rho_b, h);
            if !self.frozen {
                let v = self.back_action(&state.imp);
                self.bath.local(&mut state.bath.psi, Some(&v), h);
            }
        }
        state.time += self.dt;
    }
}

/// Mean-field energy decomposition of a coupled state under `pulse`.
pub fn coupled_energy(state: &CoupledState, params: &SystemParams, pulse: &PulseSpec) -> Result<EnergyBreakdown> {
    let bg = &state.bath.grid;
    let gp = GpHamiltonian::new(bg.clone(), params.m_b, params.omega, params.g_bb, None)?;
    let bath = gp.energy(&state.bath.psi);
    let ig = state.imp.grid();
    let t = kinetic_matrix(ig, params.m_i)?.to_dense();
    let v = harmonic_potential(ig, params.m_i, params.omega)?.diagonal_values().unwrap().to_vec();
    let rho_b = bg.interpolation_to(ig).apply(&state.bath.density());
    let dx = ig.dx();
    let m = ig.len();
    let one_body = |f: &[C64]| -> f64 {
        let re = &t * nalgebra::DVector::from_iterator(m, f.iter().map(|z| z.re));
        let im = &t * nalgebra::DVector::from_iterator(m, f.iter().map(|z| z.im));
        f.iter()
            .enumerate()
            .map(|(i, z)| (z.conj() * C64::new(re[i], im[i])).re + v[i] * z.norm_sqr())
            .sum::<f64>()
            * dx
    };
    let rho_up = state.imp.density(Spin::Up);
    let interspecies = params.g_bi * rho_up.iter().zip(&rho_b).map(|(a, b)| a * b).sum::<f64>() * dx;
    let (n_up, n_down) = state.imp.spin_populations();
    let (impurity_free, intra_impurity, spin) = match &state.imp {
        ImpurityState::Single { up, down, .. } => {
            let c = grid_inner(up, down) * dx;
            let sx = 2.0 * c.re;
            (one_body(up) + one_body(down), 0.0, 0.5 * pulse.omega_r0 * sx - 0.5 * pulse.detuning * (n_up - n_down))
        }
        ImpurityState::Pair { comps, .. } => {
            // Kinetic and trap energy: sum over both coordinates of each component.
            let tt = t.transpose();
            let mut free = 0.0;
            let mut contact = 0.0;
            let mut sx = 0.0;
            for c in comps.iter() {
                let re = DMatrix::from_row_iterator(m, m, c.iter().map(|z| z.re));
                let im = DMatrix::from_row_iterator(m, m, c.iter().map(|z| z.im));
                let tre = &t * &re + &re * &tt;
                let tim = &t * &im + &im * &tt;
                for i in 0..m {
                    for j in 0..m {
                        let z = c[i * m + j];
                        free += (z.conj() * C64::new(tre[(i, j)], tim[(i, j)])).re + (v[i] + v[j]) * z.norm_sqr();
                    }
                    contact += c[i * m + i].norm_sqr();
                }
            }
            // Collective sigma_x: flips of either spin.
            let pairs = [(UU, DU), (UD, DD), (UU, UD), (DU, DD)];
            for (a, b) in pairs {
                sx += 2.0 * grid_inner(&comps[a], &comps[b]).re;
            }
            let w = dx * dx;
            (
                free * w,
                params.g_ii * contact * dx,
                0.5 * pulse.omega_r0 * sx * w - 0.5 * pulse.detuning * (n_up - n_down),
            )
        }
    };
    Ok(EnergyBreakdown { bath, impurity_free, interspecies, intra_impurity, spin })
}

fn grid_inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Evolves under `pulse` for its full duration. `observer` sees the state at
/// t = 0 and then every `opts.stride`, plus the final state.
pub fn evolve_coupled(
    state: &CoupledState,
    params: &SystemParams,
    pulse: &PulseSpec,
    opts: &EvolveOptions,
    mut observer: impl FnMut(&CoupledState) -> Result<()>,
) -> Result<CoupledState> {
    pulse.validate()?;
    let steps = ((pulse.duration / opts.dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = pulse.duration / steps as f64;
    let mut prop = CoupledPropagator::new(state, params, pulse, dt, opts)?;
    let every = ((opts.stride / dt).round() as usize).max(1);
    let mut cur = state.clone();
    let t0 = cur.time;
    let n_bath = cur.bath.norm();
    let n_imp = cur.imp.norm();
    observer(&cur)?;
    for s in 1..=steps {
        prop.step(&mut cur);
        cur.time = t0 + s as f64 * dt;
        if s % every == 0 || s == steps {
            let db = (cur.bath.norm() - n_bath).abs() / n_bath;
            let di = (cur.imp.norm() - n_imp).abs();
            if db > 1e-9 || di > 1e-9 {
                return Err(Error::NormDrift { step: s, time: cur.time, drift: db.max(di) });
            }
            let sym = cur.imp.symmetry_residual();
            if sym > 1e-8 {
                return Err(Error::SymmetryViolation(sym));
            }
            observer(&cur)?;
        }
    }
    Ok(cur)
}

/// Spin populations and densities recorded along a trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub n_up: f64,
    pub n_down: f64,
    pub bath_norm: f64,
    pub impurity_norm: f64,
    pub bath_density: Vec<f64>,
    pub up_density: Vec<f64>,
    pub down_density: Vec<f64>,
}

impl Snapshot {
    pub fn of(state: &CoupledState) -> Self {
        let (n_up, n_down) = state.imp.spin_populations();
        Self {
            time: state.time,
            n_up,
            n_down,
            bath_norm: state.bath.norm(),
            impurity_norm: state.imp.norm(),
            bath_density: state.bath.density(),
            up_density: state.imp.density(Spin::Up),
            down_density: state.imp.density(Spin::Down),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::relax_ground_state;
    use std::f64::consts::PI;

    fn small_setup(params: &SystemParams) -> CoupledState {
        let grid = Arc::new(Grid::sine_dvr(128, -12.0, 12.0).unwrap());
        let (bath, _) = relax_ground_state(params, grid.clone(), None, 1e-10).unwrap();
        let ig = if params.n_i == 1 { grid } else { Arc::new(Grid::sine_dvr(48, -8.0, 8.0).unwrap()) };
        CoupledState::initial(params, bath, ig).unwrap()
    }

    fn rabi(omega: f64, delta: f64, t: f64) -> f64 {
        let w = (omega * omega + delta * delta).sqrt();
        (omega / w).powi(2) * (0.5 * w * t).sin().powi(2)
    }

    #[test]
    fn rf_hamiltonian_entries() {
        let h = build_rf_hamiltonian(&PulseSpec::pump(10.0, 0.0, 1.0), 1).unwrap();
        assert_eq!(h[(0, 1)], 5.0);
        assert_eq!(h[(1, 0)], 5.0);
        assert_eq!(h[(0, 0)], 0.0);
        let h = build_rf_hamiltonian(&PulseSpec::dark(1.0), 2).unwrap();
        assert!(h.iter().all(|&x| x == 0.0));
        let h = build_rf_hamiltonian(&PulseSpec::probe(0.0, 3.0, 1.0), 1).unwrap();
        assert_eq!((h[(0, 0)], h[(1, 1)], h[(0, 1)]), (-1.5, 1.5, 0.0));
        let h2 = build_rf_hamiltonian(&PulseSpec::pump(2.0, 1.0, 1.0), 2).unwrap();
        assert_eq!(h2, h2.transpose());
        assert_eq!((h2[(0, 0)], h2[(3, 3)]), (-1.0, 1.0));
        assert!(PulseSpec { label: PulseLabel::Dark, omega_r0: 1.0, detuning: 0.0, duration: 1.0 }.validate().is_err());
        assert!(PulseSpec::dark(0.0).validate().is_err());
    }

    #[test]
    fn expm_2x2_is_unitary_and_exact() {
        let u = expm_2x2(0.3, -1.2, 0.7, 0.9);
        let h = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.7, -1.2]);
        let (ev, vecs) = sorted_eigen(h);
        for i in 0..2 {
            for j in 0..2 {
                let mut z = ZERO;
                for k in 0..2 {
                    z += C64::from_polar(1.0, -ev[k] * 0.9) * vecs[(i, k)] * vecs[(j, k)];
                }
                assert!((z - u[i][j]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn resonant_pi_pulse_flips_free_impurity() {
        let params = SystemParams { n_b: 20, g_bi: 0.0, ..Default::default() };
        let s = small_setup(&params);
        let pulse = PulseSpec::pump(10.0, 0.0, PI / 10.0);
        let out = evolve_coupled(&s, &params, &pulse, &EvolveOptions::default(), |_| Ok(())).unwrap();
        let (up, down) = out.imp.spin_populations();
        assert!((up - 1.0).abs() < 1e-3 && down < 1e-3);
    }

    #[test]
    fn free_spin_dynamics_follow_two_level_formula() {
        let params = SystemParams { n_b: 20, g_bi: 0.0, ..Default::default() };
        let s = small_setup(&params);
        for (omega, delta) in [(10.0, 10.0), (1.0, -2.5), (3.0, 0.4)] {
            let pulse = PulseSpec::pump(omega, delta, 1.3);
            let mut worst: f64 = 0.0;
            evolve_coupled(&s, &params, &pulse, &EvolveOptions { stride: 0.05, ..Default::default() }, |st| {
                let (up, _) = st.imp.spin_populations();
                worst = worst.max((up - rabi(omega, delta, st.time)).abs());
                Ok(())
            })
            .unwrap();
            assert!(worst < 1e-4, "omega {omega}, delta {delta}: {worst}");
        }
    }

    #[test]
    fn blast_projection_cases() {
        let params = SystemParams { n_b: 20, g_bi: 0.0, ..Default::default() };
        let s = small_setup(&params);
        assert!(matches!(blast_project(&s), Err(Error::EmptyProjection(_))));
        let mut half = s.clone();
        half.imp.rotate_spins(expm_2x2(0.0, 0.0, 1.0, PI / 4.0));
        let (up, down) = half.imp.spin_populations();
        assert!((up - 0.5).abs() < 1e-12 && (down - 0.5).abs() < 1e-12);
        let p = blast_project(&half).unwrap();
        let (up, down) = p.imp.spin_populations();
        assert!((up - 1.0).abs() < 1e-12 && down == 0.0);
        let d = apply_blast_dissipative(&half, 100.0, 0.1).unwrap();
        if let (ImpurityState::Single { up: a, .. }, ImpurityState::Single { up: b, .. }) = (&p.imp, &d.imp) {
            let ov = grid_inner(a, b) * p.imp.grid().dx();
            assert!(ov.norm_sqr() > 0.999);
        }
        let (_, dn) = d.imp.spin_populations();
        assert!((dn - (-20f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn pair_sectors_and_populations() {
        for stats in [Statistics::Boson, Statistics::Fermion] {
            let params = SystemParams { n_b: 10, n_i: 2, g_bi: 1.0, statistics: stats, ..Default::default() };
            let s = small_setup(&params);
            assert!((s.imp.norm() - 1.0).abs() < 1e-10);
            assert_eq!(s.imp.spin_populations().1.round(), 2.0);
            let pulse = PulseSpec::pump(6.0, 1.0, 0.4);
            let out = evolve_coupled(&s, &params, &pulse, &EvolveOptions::default(), |st| {
                assert!(st.imp.symmetry_residual() < 1e-8);
                let (u, d) = st.imp.spin_populations();
                assert!((u + d - 2.0).abs() < 1e-10);
                Ok(())
            })
            .unwrap();
            assert!(out.imp.spin_populations().0 > 0.1);
        }
    }

    #[test]
    fn free_pair_follows_two_level_formula() {
        let params = SystemParams { n_b: 10, n_i: 2, g_bi: 0.0, statistics: Statistics::Fermion, ..Default::default() };
        let s = small_setup(&params);
        let pulse = PulseSpec::pump(4.0, 2.0, 1.0);
        evolve_coupled(&s, &params, &pulse, &EvolveOptions::default(), |st| {
            let (up, _) = st.imp.spin_populations();
            assert!((up / 2.0 - rabi(4.0, 2.0, st.time)).abs() < 1e-4);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn dark_evolution_conserves_energy_and_norms() {
        let params = SystemParams { n_b: 20, g_bi: 1.5, ..Default::default() };
        let s = blast_project(&{
            let mut s = small_setup(&params);
            s.imp.rotate_spins(expm_2x2(0.0, 0.0, 1.0, PI / 2.0));
            s
        })
        .unwrap();
        let dark = PulseSpec::dark(5.0);
        let e0 = coupled_energy(&s, &params, &dark).unwrap().total();
        let opts = EvolveOptions { dt: 0.002, ..Default::default() };
        evolve_coupled(&s, &params, &dark, &opts, |st| {
            let e = coupled_energy(st, &params, &dark).unwrap().total();
            assert!((e - e0).abs() / e0.abs() < 1e-5, "t = {}: {e} vs {e0}", st.time);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn interacting_pair_ground_state_is_lower_for_attraction() {
        let grid = Arc::new(Grid::sine_dvr(40, -6.0, 6.0).unwrap());
        let e = |g: f64| {
            let f = pair_ground_state(&grid, 1.0, 1.0, None, g, Statistics::Boson).unwrap();
            let st = CoupledState {
                bath: BathField::new(grid.clone(), vec![C64::new(1e-3, 0.0); 40]).unwrap(),
                imp: ImpurityState::Pair {
                    grid: grid.clone(),
                    statistics: Statistics::Boson,
                    comps: [f, vec![ZERO; 1600], vec![ZERO; 1600], vec![ZERO; 1600]],
                },
                time: 0.0,
            };
            let p = SystemParams { n_b: 1, n_i: 2, g_bb: 0.0, g_bi: 0.0, g_ii: g, ..Default::default() };
            let b = coupled_energy(&st, &p, &PulseSpec::dark(1.0)).unwrap();
            b.impurity_free + b.intra_impurity
        };
        assert!((e(0.0) - 1.0).abs() < 1e-6);
        assert!(e(-0.5) < 1.0 && e(0.5) > 1.0);
    }
}
