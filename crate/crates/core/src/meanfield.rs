//! Gross-Pitaevskii bath: relaxation, Thomas-Fermi reference and real-time propagation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{harmonic_potential, kinetic_matrix, Grid, KineticPropagator, Operator, C64};
use crate::params::SystemParams;

/// Mean-field order parameter, normalised to the particle number.
#[derive(Clone, Debug)]
pub struct BathField {
    pub grid: Arc<Grid>,
    pub psi: Vec<C64>,
}

impl BathField {
    pub fn new(grid: Arc<Grid>, psi: Vec<C64>) -> Result<Self> {
        if psi.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!("field has {} points, grid {}", psi.len(), grid.len())));
        }
        Ok(Self { grid, psi })
    }

    pub fn norm(&self) -> f64 {
        self.grid.norm_sqr(&self.psi)
    }

    pub fn density(&self) -> Vec<f64> {
        self.grid.density(&self.psi)
    }

    /// Density interpolated to x = 0.
    pub fn central_density(&self) -> f64 {
        let c = self.grid.sine_coefficients(&self.psi);
        self.grid.evaluate_sine_series(&c, 0.0).norm_sqr()
    }
}

/// Single-particle GP operator `T + V + g|psi|^2` on a grid.
#[derive(Clone, Debug)]
pub struct GpHamiltonian {
    pub grid: Arc<Grid>,
    kinetic: DMatrix<f64>,
    /// Trap plus any static extra potential (diagonal part).
    pub potential: Vec<f64>,
    /// Dense extra potential if one was supplied.
    extra_dense: Option<DMatrix<f64>>,
    pub g: f64,
}

impl GpHamiltonian {
    pub fn new(grid: Arc<Grid>, mass: f64, omega: f64, g: f64, extra: Option<&Operator>) -> Result<Self> {
        let kinetic = kinetic_matrix(&grid, mass)?.to_dense();
        let mut potential = harmonic_potential(&grid, mass, omega)?.diagonal_values().unwrap().to_vec();
        let mut extra_dense = None;
        if let Some(op) = extra {
            if op.dim() != grid.len() {
                return Err(Error::ShapeMismatch(format!("extra potential dim {} vs grid {}", op.dim(), grid.len())));
            }
            if !op.hermitian {
                return Err(Error::InvalidParameter("extra potential must be Hermitian".into()));
            }
            match op.diagonal_values() {
                Some(d) => potential.iter_mut().zip(d).for_each(|(v, e)| *v += e),
                None => extra_dense = Some(op.to_dense()),
            }
        }
        Ok(Self { grid, kinetic, potential, extra_dense, g })
    }

    fn dense_linear(&self) -> DMatrix<f64> {
        let mut h = self.kinetic.clone();
        if let Some(e) = &self.extra_dense {
            h += e;
        }
        for i in 0..h.nrows() {
            h[(i, i)] += self.potential[i];
        }
        h
    }

    fn mat_apply(m: &DMatrix<f64>, psi: &[C64]) -> Vec<C64> {
        let n = psi.len();
        let re = m * DVector::from_iterator(n, psi.iter().map(|z| z.re));
        let im = m * DVector::from_iterator(n, psi.iter().map(|z| z.im));
        re.iter().zip(im.iter()).map(|(&a, &b)| C64::new(a, b)).collect()
    }

    /// `h[psi] psi`
    pub fn apply(&self, psi: &[C64]) -> Vec<C64> {
        let mut out = Self::mat_apply(&self.kinetic, psi);
        if let Some(e) = &self.extra_dense {
            for (o, v) in out.iter_mut().zip(Self::mat_apply(e, psi)) {
                *o += v;
            }
        }
        for ((o, z), v) in out.iter_mut().zip(psi).zip(&self.potential) {
            *o += z * (v + self.g * z.norm_sqr());
        }
        out
    }

    /// GP energy functional.
    pub fn energy(&self, psi: &[C64]) -> f64 {
        let mut lin = Self::mat_apply(&self.kinetic, psi);
        if let Some(e) = &self.extra_dense {
            for (o, v) in lin.iter_mut().zip(Self::mat_apply(e, psi)) {
                *o += v;
            }
        }
        let dx = self.grid.dx();
        let mut e = 0.0;
        for ((l, z), v) in lin.iter().zip(psi).zip(&self.potential) {
            let r = z.norm_sqr();
            e += (z.conj() * l).re + v * r + 0.5 * self.g * r * r;
        }
        e * dx
    }

    pub fn kinetic_energy(&self, psi: &[C64]) -> f64 {
        let t = Self::mat_apply(&self.kinetic, psi);
        psi.iter().zip(&t).map(|(z, w)| (z.conj() * w).re).sum::<f64>() * self.grid.dx()
    }

    /// `<h> / N`
    pub fn chemical_potential(&self, psi: &[C64]) -> f64 {
        let hp = self.apply(psi);
        let num: f64 = psi.iter().zip(&hp).map(|(z, w)| (z.conj() * w).re).sum();
        let den: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        num / den
    }

    /// `||h psi - mu psi|| / ||psi||`
    pub fn residual(&self, psi: &[C64]) -> f64 {
        let mu = self.chemical_potential(psi);
        let hp = self.apply(psi);
        let r: f64 = hp.iter().zip(psi).map(|(a, b)| (a - b * mu).norm_sqr()).sum();
        let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        (r / n).sqrt()
    }
}

/// Diagnostics of a relaxation run.
#[derive(Clone, Debug, Default)]
pub struct RelaxReport {
    pub imaginary_steps: usize,
    pub newton_steps: usize,
    pub energy_history: Vec<f64>,
    pub residual: f64,
}

fn normalize_to(grid: &Grid, psi: &mut [C64], n: f64) {
    let s = (n / grid.norm_sqr(psi)).sqrt();
    psi.iter_mut().for_each(|z| *z *= s);
}

/// Relaxes the bath to its GP ground state and returns it with the chemical potential.
pub fn relax_ground_state(
    params: &SystemParams,
    grid: Arc<Grid>,
    extra_potential: Option<&Operator>,
    tol: f64,
) -> Result<(BathField, f64)> {
    relax_ground_state_report(params, grid, extra_potential, tol).map(|(b, mu, _)| (b, mu))
}

/// As [`relax_ground_state`], also returning iteration diagnostics.
pub fn relax_ground_state_report(
    params: &SystemParams,
    grid: Arc<Grid>,
    extra_potential: Option<&Operator>,
    tol: f64,
) -> Result<(BathField, f64, RelaxReport)> {
    params.validate_physical()?;
    if params.n_b == 0 {
        return Err(Error::InvalidParameter("n_b must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let n = params.n_b as f64;
    let h = GpHamiltonian::new(grid.clone(), params.m_b, params.omega, params.g_bb, extra_potential)?;
    let mut report = RelaxReport::default();

    // Start from the Thomas-Fermi profile plus a Gaussian seed.
    let tf = ThomasFermi::new(params).ok();
    let width = (1.0 / (params.m_b * params.omega)).sqrt();
    let mut psi: Vec<C64> = grid
        .points()
        .iter()
        .map(|&x| {
            let seed = (-(x * x) / (2.0 * width * width)).exp();
            let tf_amp = tf.as_ref().map(|t| t.density(x).sqrt()).unwrap_or(0.0);
            C64::new(tf_amp + 1e-3 * (1.0 + tf_amp) * seed + if tf.is_none() { seed } else { 0.0 }, 0.0)
        })
        .collect();
    normalize_to(&grid, &mut psi, n);

    // Imaginary-time Strang steps; a step is kept only if the energy drops.
    let mut tau = 0.02 / params.omega;
    let mut energy = h.energy(&psi);
    report.energy_history.push(energy);
    let mut kin = KineticPropagator::imaginary(&grid, params.m_b, tau);
    let max_steps = 20_000;
    while report.imaginary_steps < max_steps {
        let mut trial = psi.clone();
        imaginary_strang(&h, &mut kin, &mut trial, tau);
        normalize_to(&grid, &mut trial, n);
        let e_new = h.energy(&trial);
        if e_new > energy + 1e-14 * energy.abs() {
            tau *= 0.5;
            kin = KineticPropagator::imaginary(&grid, params.m_b, tau);
            if tau < 1e-8 {
                break;
            }
            continue;
        }
        report.imaginary_steps += 1;
        let de = (energy - e_new) / n;
        psi = trial;
        energy = e_new;
        report.energy_history.push(energy);
        if de < 1e-9 * tau {
            break;
        }
    }

    // Newton polish on the stationarity equation with the norm constraint.
    let m = grid.len();
    let dx = grid.dx();
    let lin = h.dense_linear();
    let mut mu = h.chemical_potential(&psi);
    let mut phi: Vec<f64> = psi.iter().map(|z| z.re).collect();
    let mut last_de = f64::INFINITY;
    for it in 0..50 {
        let cur: Vec<C64> = phi.iter().map(|&v| C64::new(v, 0.0)).collect();
        let res = h.residual(&cur);
        if it > 0 && last_de < tol && res < 10.0 * tol {
            report.residual = res;
            let field = BathField::new(grid, cur)?;
            let mu = h.chemical_potential(&field.psi);
            return Ok((field, mu, report));
        }
        let mut j = DMatrix::zeros(m + 1, m + 1);
        j.view_mut((0, 0), (m, m)).copy_from(&lin);
        let mut r = DVector::zeros(m + 1);
        let hphi = &lin * DVector::from_column_slice(&phi);
        for i in 0..m {
            let p2 = phi[i] * phi[i];
            j[(i, i)] += 3.0 * h.g * p2 - mu;
            j[(i, m)] = -phi[i];
            j[(m, i)] = 2.0 * phi[i] * dx;
            r[i] = hphi[i] + (h.g * p2 - mu) * phi[i];
        }
        r[m] = phi.iter().map(|v| v * v).sum::<f64>() * dx - n;
        let step = j.lu().solve(&(-r)).ok_or(Error::NonConvergence { iterations: it, residual: res })?;
        let mut trial: Vec<f64> = phi.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let s = (n / (trial.iter().map(|v| v * v).sum::<f64>() * dx)).sqrt();
        trial.iter_mut().for_each(|v| *v *= s);
        let tc: Vec<C64> = trial.iter().map(|&v| C64::new(v, 0.0)).collect();
        let e_new = h.energy(&tc);
        if e_new > energy + 1e-12 * energy.abs().max(1.0) {
            return Err(Error::NonConvergence { iterations: report.imaginary_steps + it, residual: res });
        }
        last_de = (energy - e_new).abs() / n;
        energy = e_new;
        report.energy_history.push(energy);
        phi = trial;
        mu = h.chemical_potential(&tc);
        report.newton_steps += 1;
    }
    let cur: Vec<C64> = phi.iter().map(|&v| C64::new(v, 0.0)).collect();
    Err(Error::NonConvergence { iterations: report.imaginary_steps + report.newton_steps, residual: h.residual(&cur) })
}

fn imaginary_strang(h: &GpHamiltonian, kin: &mut KineticPropagator, psi: &mut [C64], tau: f64) {
    let half = |psi: &mut [C64]| {
        for (z, v) in psi.iter_mut().zip(&h.potential) {
            *z *= (-(v + h.g * z.norm_sqr()) * tau * 0.5).exp();
        }
    };
    half(psi);
    if let Some(e) = &h.extra_dense {
        // Dense extras are rare; fold them into a first-order correction.
        let corr = GpHamiltonian::mat_apply(e, psi);
        for (z, c) in psi.iter_mut().zip(corr) {
            *z -= c * tau;
        }
    }
    kin.apply(psi);
    half(psi);
}

/// Analytic Thomas-Fermi profile of the trapped bath.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThomasFermi {
    pub mu: f64,
    pub radius: f64,
    pub g: f64,
    pub mass: f64,
    pub omega: f64,
}

impl ThomasFermi {
    pub fn new(params: &SystemParams) -> Result<Self> {
        if !(params.g_bb > 0.0) {
            return Err(Error::InvalidParameter("Thomas-Fermi profile needs g_bb > 0".into()));
        }
        let (m, w, g, n) = (params.m_b, params.omega, params.g_bb, params.n_b as f64);
        let mu = (0.75 * n * g * (0.5 * m * w * w).sqrt()).powf(2.0 / 3.0);
        let radius = (2.0 * mu / (m * w * w)).sqrt();
        Ok(Self { mu, radius, g, mass: m, omega: w })
    }

    pub fn density(&self, x: f64) -> f64 {
        ((self.mu - 0.5 * self.mass * self.omega * self.omega * x * x) / self.g).max(0.0)
    }

    pub fn peak_density(&self) -> f64 {
        self.mu / self.g
    }
}

/// Thomas-Fermi chemical potential and density profile.
pub fn thomas_fermi_profile(params: &SystemParams) -> Result<(f64, impl Fn(f64) -> f64)> {
    let tf = ThomasFermi::new(params)?;
    Ok((tf.mu, move |x| tf.density(x)))
}

/// Splitting order for real-time propagation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    #[default]
    Strang,
    /// Fourth-order triple-jump composition of Strang steps.
    Yoshida4,
}

impl Splitting {
    /// Sub-step weights of the composition.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            Splitting::Strang => vec![1.0],
            Splitting::Yoshida4 => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                vec![w1, -c * w1, w1]
            }
        }
    }
}

/// Real-time split-step propagator of the GP equation.
pub struct GpPropagator {
    pub grid: Arc<Grid>,
    pub potential: Vec<f64>,
    pub g: f64,
    weights: Vec<f64>,
    kinetic: Vec<KineticPropagator>,
    pub dt: f64,
}

impl GpPropagator {
    pub fn new(params: &SystemParams, grid: Arc<Grid>, dt: f64, splitting: Splitting) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let potential = harmonic_potential(&grid, params.m_b, params.omega)?.diagonal_values().unwrap().to_vec();
        let weights = splitting.weights();
        let kinetic = weights.iter().map(|w| KineticPropagator::new(&grid, params.m_b, w * dt)).collect();
        Ok(Self { grid, potential, g: params.g_bb, weights, kinetic, dt })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `exp(-i (V + g|psi|^2 + extra) h)`
    pub fn local(&self, psi: &mut [C64], extra: Option<&[f64]>, h: f64) {
        match extra {
            Some(e) => {
                for ((z, v), x) in psi.iter_mut().zip(&self.potential).zip(e) {
                    *z *= C64::from_polar(1.0, -(v + x + self.g * z.norm_sqr()) * h);
                }
            }
            None => {
                for (z, v) in psi.iter_mut().zip(&self.potential) {
                    *z *= C64::from_polar(1.0, -(v + self.g * z.norm_sqr()) * h);
                }
            }
        }
    }

    /// Kinetic propagation for sub-step `k` of the composition.
    pub fn kinetic(&mut self, psi: &mut [C64], k: usize) {
        self.kinetic[k].apply(psi);
    }

    /// One full step with a potential held fixed over the step.
    pub fn step(&mut self, psi: &mut [C64], extra: Option<&[f64]>) {
        for k in 0..self.weights.len() {
            let h = 0.5 * self.weights[k] * self.dt;
            self.local(psi, extra, h);
            self.kinetic(psi, k);
            self.local(psi, extra, h);
        }
    }
}

/// Sampled bath trajectory.
#[derive(Clone, Debug, Default)]
pub struct GpTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub norms: Vec<f64>,
}

/// Propagates the bath, sampling every `stride` time units. `extra(t)` is the
/// time-dependent external potential, evaluated at step midpoints.
pub fn propagate_gp(
    state: &BathField,
    params: &SystemParams,
    extra: Option<&dyn Fn(f64) -> Vec<f64>>,
    dt: f64,
    duration: f64,
    stride: f64,
    splitting: Splitting,
) -> Result<GpTrajectory> {
    if !(duration >= 0.0) {
        return Err(Error::InvalidParameter(format!("duration must be non-negative, got {duration}")));
    }
    let mut prop = GpPropagator::new(params, state.grid.clone(), dt, splitting)?;
    let steps = (duration / dt).round() as usize;
    let every = ((stride / dt).round() as usize).max(1);
    let mut psi = state.psi.clone();
    let n0 = state.norm();
    let mut traj = GpTrajectory::default();
    traj.times.push(0.0);
    traj.states.push(psi.clone());
    traj.norms.push(n0);
    for s in 1..=steps {
        let t_mid = (s as f64 - 0.5) * dt;
        let pot = extra.map(|f| f(t_mid));
        prop.step(&mut psi, pot.as_deref());
        if s % every == 0 || s == steps {
            let nrm = state.grid.norm_sqr(&psi);
            let drift = (nrm - n0).abs() / n0;
            if drift > 1e-9 {
                return Err(Error::NormDrift { step: s, time: s as f64 * dt, drift });
            }
            traj.times.push(s as f64 * dt);
            traj.states.push(psi.clone());
            traj.norms.push(nrm);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_grid() -> Arc<Grid> {
        Arc::new(Grid::sine_dvr(600, -50.0, 50.0).unwrap())
    }

    #[test]
    fn thomas_fermi_closed_form() {
        let p = SystemParams::default();
        let (mu, rho) = thomas_fermi_profile(&p).unwrap();
        assert!((mu - 8.8924).abs() < 1e-3, "{mu}");
        let tf = ThomasFermi::new(&p).unwrap();
        // Integral of the inverted parabola, evaluated by fine quadrature.
        let n = 200_000;
        let h = 2.0 * tf.radius / n as f64;
        let total: f64 = (0..n).map(|k| rho(-tf.radius + (k as f64 + 0.5) * h)).sum::<f64>() * h;
        assert!((total - 100.0).abs() < 1e-6);
        assert_eq!(rho(tf.radius + 1e-9), 0.0);
        assert_eq!(rho(-tf.radius - 1.0), 0.0);
        assert!(thomas_fermi_profile(&SystemParams { g_bb: 0.0, ..p }).is_err());
    }

    #[test]
    fn noninteracting_ground_state() {
        let p = SystemParams { g_bb: 0.0, ..Default::default() };
        let (bath, mu) = relax_ground_state(&p, default_grid(), None, 1e-10).unwrap();
        assert!((mu - 0.5).abs() < 1e-6);
        assert!((bath.norm() - 100.0).abs() < 1e-10);
    }

    #[test]
    fn interacting_ground_state_matches_thomas_fermi() {
        let p = SystemParams::default();
        let (bath, mu, report) = relax_ground_state_report(&p, default_grid(), None, 1e-10).unwrap();
        let tf = ThomasFermi::new(&p).unwrap();
        assert!((mu - tf.mu).abs() / tf.mu < 0.02, "mu {mu} vs {}", tf.mu);
        let rho0 = bath.central_density();
        assert!((rho0 - 17.8).abs() / 17.8 < 0.03, "rho0 {rho0}");
        assert!(report.residual < 1e-9);
        // Accepted steps never raise the energy.
        for w in report.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn thomas_fermi_error_shrinks_with_particle_number() {
        let grid = default_grid();
        let errs: Vec<f64> = [10, 50, 100]
            .iter()
            .map(|&n| {
                let p = SystemParams { n_b: n, ..Default::default() };
                let (_, mu) = relax_ground_state(&p, grid.clone(), None, 1e-10).unwrap();
                let tf = ThomasFermi::new(&p).unwrap().mu;
                (mu - tf).abs() / tf
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn extra_potential_shifts_chemical_potential() {
        let grid = default_grid();
        let p = SystemParams { g_bb: 0.0, ..Default::default() };
        let shift = Operator::diagonal(vec![0.25; grid.len()]);
        let (_, mu) = relax_ground_state(&p, grid, Some(&shift), 1e-10).unwrap();
        assert!((mu - 0.75).abs() < 1e-6);
    }

    #[test]
    fn coherent_state_oscillates() {
        let grid = default_grid();
        let p = SystemParams { g_bb: 0.0, n_b: 1, ..Default::default() };
        let x0 = 2.0;
        let psi: Vec<C64> = grid
            .points()
            .iter()
            .map(|x| C64::new(std::f64::consts::PI.powf(-0.25) * (-(x - x0) * (x - x0) / 2.0).exp(), 0.0))
            .collect();
        let bath = BathField::new(grid.clone(), psi).unwrap();
        let traj = propagate_gp(&bath, &p, None, 0.001, 2.0 * std::f64::consts::PI, 0.1, Splitting::Strang).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let xm: f64 = grid.points().iter().zip(s).map(|(x, z)| x * z.norm_sqr()).sum::<f64>() * grid.dx();
            assert!((xm - x0 * t.cos()).abs() < 1e-6, "t = {t}: {xm}");
        }
    }

    #[test]
    fn ground_state_is_stationary() {
        let grid = default_grid();
        let p = SystemParams::default();
        let (bath, _) = relax_ground_state(&p, grid.clone(), None, 1e-10).unwrap();
        let rho0 = bath.density();
        let traj = propagate_gp(&bath, &p, None, 0.004, 100.0, 1.0, Splitting::Yoshida4).unwrap();
        let worst = traj
            .states
            .iter()
            .map(|s| s.iter().zip(&rho0).map(|(z, r)| (z.norm_sqr() - r).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "density change {worst}");
        for n in traj.norms {
            assert!((n - 100.0).abs() < 1e-9 * 100.0);
        }
    }

    #[test]
    fn static_energy_is_conserved() {
        let grid = Arc::new(Grid::sine_dvr(300, -25.0, 25.0).unwrap());
        let p = SystemParams::default();
        let (bath, _) = relax_ground_state(&p, grid.clone(), None, 1e-10).unwrap();
        // Kick the state off equilibrium and check energy over the run.
        let psi: Vec<C64> = bath.psi.iter().zip(grid.points()).map(|(z, x)| z * C64::from_polar(1.0, 0.3 * x)).collect();
        let kicked = BathField::new(grid.clone(), psi).unwrap();
        let h = GpHamiltonian::new(grid.clone(), 1.0, 1.0, p.g_bb, None).unwrap();
        let e0 = h.energy(&kicked.psi);
        let traj = propagate_gp(&kicked, &p, None, 0.002, 20.0, 0.5, Splitting::Strang).unwrap();
        for s in &traj.states {
            assert!((h.energy(s) - e0).abs() / e0 < 1e-6);
        }
    }

    #[test]
    fn breathing_mode_frequency() {
        let grid = default_grid();
        let p = SystemParams::default();
        let (bath, _) = relax_ground_state(&p, grid.clone(), None, 1e-10).unwrap();
        let quenched = SystemParams { g_bb: 0.55, ..p };
        let traj = propagate_gp(&bath, &quenched, None, 0.005, 15.0, 0.01, Splitting::Strang).unwrap();
        let x2: Vec<f64> = traj
            .states
            .iter()
            .map(|s| grid.points().iter().zip(s).map(|(x, z)| x * x * z.norm_sqr()).sum::<f64>() * grid.dx())
            .collect();
        let mean = x2.iter().sum::<f64>() / x2.len() as f64;
        let mut crossings = Vec::new();
        for k in 1..x2.len() {
            let (a, b) = (x2[k - 1] - mean, x2[k] - mean);
            if a * b < 0.0 {
                let frac = a / (a - b);
                crossings.push(traj.times[k - 1] + frac * (traj.times[k] - traj.times[k - 1]));
            }
        }
        let n = crossings.len();
        let half_period = (crossings[n - 1] - crossings[1]) / (n - 2) as f64;
        let freq = std::f64::consts::PI / half_period;
        assert!((freq - 3f64.sqrt()).abs() / 3f64.sqrt() < 0.05, "breathing frequency {freq}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let grid = Arc::new(Grid::sine_dvr(50, -5.0, 5.0).unwrap());
        let p = SystemParams::default();
        assert!(relax_ground_state(&p, grid.clone(), None, 0.0).is_err());
        let bad = Operator::diagonal(vec![0.0; 10]);
        assert!(relax_ground_state(&p, grid, Some(&bad), 1e-10).is_err());
    }
}
