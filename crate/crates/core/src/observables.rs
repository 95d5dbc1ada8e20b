//! Densities, one-body coherence and its statistics, interaction energies and
//! the Ramsey structure factor.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coupled::{coupled_energy, evolve_coupled, CoupledState, EvolveOptions, ImpurityState, PulseSpec, Spin, DD, DU, UD, UU};
use crate::error::{Error, Result};
use crate::grid::{Grid, C64};
use crate::params::SystemParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Bath,
    Up,
    Down,
}

impl std::str::FromStr for Species {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "b" | "bath" => Ok(Species::Bath),
            "up" | "u" => Ok(Species::Up),
            "down" | "d" => Ok(Species::Down),
            other => Err(Error::InvalidParameter(format!("unknown species tag '{other}'"))),
        }
    }
}

/// `rho(x, x') = <psi^dag(x') psi(x)>` sampled on a grid (function values).
#[derive(Clone, Debug)]
pub struct OneBodyDensityMatrix {
    pub species: Species,
    pub grid: Arc<Grid>,
    pub matrix: DMatrix<C64>,
    pub time: f64,
}

impl OneBodyDensityMatrix {
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.grid.integrate(&self.diagonal())
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the operator `rho dx` (natural occupations), descending.
    pub fn occupations(&self) -> Vec<f64> {
        let h = &self.matrix * C64::new(self.grid.dx(), 0.0);
        let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }
}

/// `A A^H` for complex `A` via real products.
pub(crate) fn gram(ar: &DMatrix<f64>, ai: &DMatrix<f64>) -> DMatrix<C64> {
    let re = ar * ar.transpose() + ai * ai.transpose();
    let im = ai * ar.transpose() - ar * ai.transpose();
    DMatrix::from_fn(re.nrows(), re.ncols(), |i, j| C64::new(re[(i, j)], im[(i, j)]))
}

fn outer(psi: &[C64]) -> DMatrix<C64> {
    let n = psi.len();
    DMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj())
}

/// One-body density matrix of a mean-field coupled state.
pub fn one_body_density_matrix(state: &CoupledState, species: Species) -> OneBodyDensityMatrix {
    let (grid, matrix) = match species {
        Species::Bath => (state.bath.grid.clone(), outer(&state.bath.psi)),
        Species::Up | Species::Down => {
            let grid = state.imp.grid().clone();
            let m = match &state.imp {
                ImpurityState::Single { up, down, .. } => outer(if species == Species::Up { up } else { down }),
                ImpurityState::Pair { grid, comps, .. } => {
                    let n = grid.len();
                    let (a, b) = if species == Species::Up { (UU, UD) } else { (DD, DU) };
                    // Rows x1, columns (s2, x2): 2 sum_{x2} Psi Psi^* dx.
                    let s = (2.0 * grid.dx()).sqrt();
                    let ar = DMatrix::from_fn(n, 2 * n, |i, k| {
                        let c = if k < n { a } else { b };
                        comps[c][i * n + k % n].re * s
                    });
                    let ai = DMatrix::from_fn(n, 2 * n, |i, k| {
                        let c = if k < n { a } else { b };
                        comps[c][i * n + k % n].im * s
                    });
                    gram(&ar, &ai)
                }
            };
            (grid, m)
        }
    };
    OneBodyDensityMatrix { species, grid, matrix, time: state.time }
}

/// `|g1(x, x')|` with a support mask.
#[derive(Clone, Debug)]
pub struct CoherenceField {
    pub values: DMatrix<f64>,
    pub support: Vec<bool>,
    pub time: f64,
}

/// Support threshold relative to the peak density.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

/// `|rho(x,x')| / sqrt(rho(x) rho(x'))` on points with density above `threshold * max`.
pub fn coherence_function(rho: &OneBodyDensityMatrix, threshold: f64) -> CoherenceField {
    let d = rho.diagonal();
    let peak = d.iter().copied().fold(0.0, f64::max);
    let support: Vec<bool> = d.iter().map(|&r| peak > 0.0 && r > threshold * peak).collect();
    let n = d.len();
    let values = DMatrix::from_fn(n, n, |i, j| {
        if support[i] && support[j] {
            rho.matrix[(i, j)].norm() / (d[i] * d[j]).sqrt()
        } else {
            0.0
        }
    });
    CoherenceField { values, support, time: rho.time }
}

/// Quantities that can be time averaged.
pub trait Averageable: Clone {
    fn zeros_like(&self) -> Self;
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale(&mut self, a: f64);
}

impl Averageable for f64 {
    fn zeros_like(&self) -> Self {
        0.0
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += a * x;
    }
    fn scale(&mut self, a: f64) {
        *self *= a;
    }
}

impl Averageable for Vec<f64> {
    fn zeros_like(&self) -> Self {
        vec![0.0; self.len()]
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        self.iter_mut().zip(x).for_each(|(s, v)| *s += a * v);
    }
    fn scale(&mut self, a: f64) {
        self.iter_mut().for_each(|s| *s *= a);
    }
}

impl Averageable for DMatrix<f64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * a;
    }
    fn scale(&mut self, a: f64) {
        *self *= a;
    }
}

impl Averageable for DMatrix<C64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn axpy(&mut self, a: f64, x: &Self) {
        *self += x * C64::new(a, 0.0);
    }
    fn scale(&mut self, a: f64) {
        *self *= C64::new(a, 0.0);
    }
}

/// Ordered samples `(t, value)`.
#[derive(Clone, Debug, Default)]
pub struct TimeSeries<T> {
    pub times: Vec<f64>,
    pub values: Vec<T>,
}

impl<T> TimeSeries<T> {
    pub fn new() -> Self {
        Self { times: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, t: f64, v: T) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if t <= last {
                return Err(Error::InvalidParameter(format!("time {t} does not increase past {last}")));
            }
        }
        self.times.push(t);
        self.values.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Time average over the sampled window.
#[derive(Clone, Debug)]
pub struct TimeAveraged<T> {
    pub window: (f64, f64),
    pub value: T,
}

/// Trapezoidal average `(1/T) int v dt` over the span of the samples.
pub fn time_average<T: Averageable>(series: &TimeSeries<T>) -> Result<TimeAveraged<T>> {
    if series.len() < 2 {
        return Err(Error::InvalidParameter("time average needs at least two samples".into()));
    }
    let mut acc = RunningAverage::new();
    for (t, v) in series.times.iter().zip(&series.values) {
        acc.push(*t, v);
    }
    acc.average()
}

/// Streaming trapezoidal average; only the integral and the last sample are kept.
#[derive(Clone, Debug)]
pub struct RunningAverage<T> {
    start: Option<f64>,
    last: Option<(f64, T)>,
    integral: Option<T>,
}

impl<T: Averageable> Default for RunningAverage<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Averageable> RunningAverage<T> {
    pub fn new() -> Self {
        Self { start: None, last: None, integral: None }
    }

    pub fn push(&mut self, t: f64, v: &T) {
        match &self.last {
            None => {
                self.start = Some(t);
                self.integral = Some(v.zeros_like());
            }
            Some((t0, v0)) => {
                let h = 0.5 * (t - t0);
                let acc = self.integral.as_mut().unwrap();
                acc.axpy(h, v0);
                acc.axpy(h, v);
            }
        }
        self.last = Some((t, v.clone()));
    }

    pub fn span(&self) -> f64 {
        match (self.start, &self.last) {
            (Some(a), Some((b, _))) => b - a,
            _ => 0.0,
        }
    }

    pub fn average(&self) -> Result<TimeAveraged<T>> {
        let span = self.span();
        if !(span > 0.0) {
            return Err(Error::InvalidParameter("time average needs at least two samples".into()));
        }
        let mut v = self.integral.clone().unwrap();
        v.scale(1.0 / span);
        Ok(TimeAveraged { window: (self.start.unwrap(), self.start.unwrap() + span), value: v })
    }
}

/// Region `S` of points where `rho_bar > rel * max`.
pub fn support_region(rho_bar: &[f64], rel: f64) -> Vec<bool> {
    let peak = rho_bar.iter().copied().fold(0.0, f64::max);
    rho_bar.iter().map(|&r| peak > 0.0 && r > rel * peak).collect()
}

/// Space-time variance of `|g1|` about its time average over region `S x S`.
pub fn coherence_variance(series: &TimeSeries<CoherenceField>, region: &[bool]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::InvalidParameter("variance needs at least two samples".into()));
    }
    let idx: Vec<usize> = region.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect();
    if idx.is_empty() {
        return Err(Error::InvalidParameter("empty region".into()));
    }
    let mut acc = CoherenceVarianceAccumulator::new(region.to_vec());
    for (t, g) in series.times.iter().zip(&series.values) {
        acc.push(*t, &g.values);
    }
    acc.variance()
}

/// Streaming evaluation of the coherence variance from running moments.
#[derive(Clone, Debug)]
pub struct CoherenceVarianceAccumulator {
    region: Vec<usize>,
    first: RunningAverage<DMatrix<f64>>,
    second: RunningAverage<DMatrix<f64>>,
}

impl CoherenceVarianceAccumulator {
    pub fn new(region: Vec<bool>) -> Self {
        let region = region.iter().enumerate().filter(|(_, &s)| s).map(|(i, _)| i).collect();
        Self { region, first: RunningAverage::new(), second: RunningAverage::new() }
    }

    pub fn push(&mut self, t: f64, g: &DMatrix<f64>) {
        let n = self.region.len();
        let sub = DMatrix::from_fn(n, n, |a, b| g[(self.region[a], self.region[b])]);
        let sq = sub.map(|v| v * v);
        self.first.push(t, &sub);
        self.second.push(t, &sq);
    }

    /// `<g^2> - <g>^2` averaged over the region.
    pub fn variance(&self) -> Result<f64> {
        if self.region.is_empty() {
            return Err(Error::InvalidParameter("empty region".into()));
        }
        let m1 = self.first.average()?.value;
        let m2 = self.second.average()?.value;
        let n = (self.region.len() * self.region.len()) as f64;
        let v: f64 = m2.iter().zip(m1.iter()).map(|(a, b)| (a - b * b).max(0.0)).sum();
        Ok(v / n)
    }
}

/// Bath-impurity interaction energy per impurity.
pub fn interspecies_energy(state: &CoupledState, params: &SystemParams) -> f64 {
    let ig = state.imp.grid();
    let rho_b = state.bath.grid.interpolation_to(ig).apply(&state.bath.density());
    let rho_up = state.imp.density(Spin::Up);
    params.g_bi * rho_up.iter().zip(&rho_b).map(|(a, b)| a * b).sum::<f64>() * ig.dx() / params.n_i as f64
}

/// Expected numbers of up and down impurities.
pub fn spin_populations(state: &CoupledState) -> (f64, f64) {
    state.imp.spin_populations()
}

/// Impurity kinetic, trap and interaction energy (spin drive excluded).
pub fn impurity_energy(state: &CoupledState, params: &SystemParams) -> Result<f64> {
    let e = coupled_energy(state, params, &PulseSpec::dark(1.0))?;
    Ok(e.impurity_free + e.interspecies + e.intra_impurity)
}

/// Overlap of two impurity states.
pub fn impurity_overlap(a: &ImpurityState, b: &ImpurityState) -> Result<C64> {
    match (a, b) {
        (ImpurityState::Single { grid, up: u1, down: d1 }, ImpurityState::Single { up: u2, down: d2, .. }) => {
            Ok(grid.inner(u1, u2) + grid.inner(d1, d2))
        }
        (ImpurityState::Pair { grid, comps: c1, .. }, ImpurityState::Pair { comps: c2, .. }) => {
            let w = grid.dx() * grid.dx();
            let mut s = C64::new(0.0, 0.0);
            for c in [UU, UD, DU, DD] {
                s += c1[c].iter().zip(&c2[c]).map(|(x, y)| x.conj() * y).sum::<C64>();
            }
            Ok(s * w)
        }
        _ => Err(Error::ShapeMismatch("impurity states of different kinds".into())),
    }
}

/// Ramsey contrast at mean-field level: the reference state is the
/// non-interacting ground state with every impurity flipped to spin up.
pub fn structure_factor(
    initial: &CoupledState,
    params: &SystemParams,
    t_max: f64,
    opts: &EvolveOptions,
) -> Result<Vec<(f64, f64)>> {
    let mut start = initial.clone();
    start.imp = flip_all_up(&initial.imp);
    start.time = 0.0;
    let n_b = params.n_b as f64;
    let bath0 = start.bath.psi.clone();
    let imp0 = start.imp.clone();
    let bgrid = start.bath.grid.clone();
    let mut out = Vec::new();
    let mut rec = |s: &CoupledState| -> Result<()> {
        let ob = bgrid.inner(&bath0, &s.bath.psi).norm() / n_b;
        let oi = impurity_overlap(&imp0, &s.imp)?.norm();
        out.push((s.time, ob.powf(n_b) * oi));
        Ok(())
    };
    if t_max > 0.0 {
        evolve_coupled(&start, params, &PulseSpec::dark(t_max), opts, &mut rec)?;
    } else {
        rec(&start)?;
    }
    Ok(out)
}

/// Moves all spin-down amplitude to spin up.
pub fn flip_all_up(imp: &ImpurityState) -> ImpurityState {
    match imp {
        ImpurityState::Single { grid, up, down } => {
            let mut merged: Vec<C64> = up.iter().zip(down).map(|(a, b)| a + b).collect();
            let n = grid.norm_sqr(&merged).sqrt();
            if n > 0.0 {
                merged.iter_mut().for_each(|z| *z /= n);
            }
            ImpurityState::Single { grid: grid.clone(), up: merged, down: vec![C64::new(0.0, 0.0); grid.len()] }
        }
        ImpurityState::Pair { grid, statistics, comps } => {
            let n = comps[0].len();
            let mut c = [comps[UU].clone(), vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]];
            for k in 0..n {
                c[UU][k] += comps[DD][k];
            }
            ImpurityState::Pair { grid: grid.clone(), statistics: *statistics, comps: c }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupled::{blast_project, CoupledState};
    use crate::meanfield::{relax_ground_state, BathField, ThomasFermi};
    use crate::params::Statistics;
    use proptest::prelude::*;

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::sine_dvr(96, -10.0, 10.0).unwrap())
    }

    fn gauss(g: &Grid, x0: f64, k: f64) -> Vec<C64> {
        let mut v: Vec<C64> = g.points().iter().map(|x| C64::from_polar((-(x - x0).powi(2) / 2.0).exp(), k * x)).collect();
        let n = g.norm_sqr(&v).sqrt();
        v.iter_mut().for_each(|z| *z /= n);
        v
    }

    fn single_state(psi: Vec<C64>) -> CoupledState {
        let g = grid();
        let bath = BathField::new(g.clone(), psi.iter().map(|z| z * 2.0).collect()).unwrap();
        CoupledState { bath, imp: ImpurityState::Single { grid: g.clone(), up: psi, down: vec![C64::new(0.0, 0.0); g.len()] }, time: 0.0 }
    }

    #[test]
    fn pure_state_density_matrix_is_rank_one() {
        let g = grid();
        let s = single_state(gauss(&g, 0.5, 0.3));
        let rho = one_body_density_matrix(&s, Species::Up);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!(rho.hermiticity_residual() < 1e-14);
        let occ = rho.occupations();
        assert!((occ[0] - 1.0).abs() < 1e-10 && occ[1].abs() < 1e-10);
        let cf = coherence_function(&rho, SUPPORT_THRESHOLD);
        for i in 0..g.len() {
            for j in 0..g.len() {
                if cf.support[i] && cf.support[j] {
                    assert!((cf.values[(i, j)] - 1.0).abs() < 1e-10);
                }
            }
        }
        let bath = one_body_density_matrix(&s, Species::Bath);
        assert!((bath.trace() - 4.0).abs() < 1e-10);
        assert!("x".parse::<Species>().is_err());
    }

    #[test]
    fn fermion_pair_has_two_unit_occupations() {
        let g = Arc::new(Grid::sine_dvr(60, -8.0, 8.0).unwrap());
        let params = SystemParams { n_b: 1, n_i: 2, g_bi: 0.0, statistics: Statistics::Fermion, ..Default::default() };
        let imp = ImpurityState::ground_state(&params, g.clone(), None, Spin::Up).unwrap();
        let s = CoupledState { bath: BathField::new(g.clone(), vec![C64::new(0.0, 0.0); 60]).unwrap(), imp, time: 0.0 };
        let rho = one_body_density_matrix(&s, Species::Up);
        assert!((rho.trace() - 2.0).abs() < 1e-10);
        let occ = rho.occupations();
        assert!((occ[0] - 1.0).abs() < 1e-10 && (occ[1] - 1.0).abs() < 1e-10 && occ[2].abs() < 1e-10);
        assert!((impurity_energy(&s, &params).unwrap() - 2.0).abs() < 1e-6);
        let cf = coherence_function(&rho, SUPPORT_THRESHOLD);
        assert!(cf.values.iter().any(|&v| v < 0.9));
    }

    #[test]
    fn mixed_state_coherence_dips() {
        // 50/50 mixture of the two lowest oscillator states.
        let g = grid();
        let f0: Vec<f64> = g.points().iter().map(|x| (-x * x / 2.0).exp()).collect();
        let f1: Vec<f64> = g.points().iter().map(|x| x * (-x * x / 2.0).exp()).collect();
        let n0 = g.integrate(&f0.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
        let n1 = g.integrate(&f1.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
        let n = g.len();
        let m = DMatrix::from_fn(n, n, |i, j| C64::new(0.5 * (f0[i] * f0[j] / (n0 * n0) + f1[i] * f1[j] / (n1 * n1)), 0.0));
        let rho = OneBodyDensityMatrix { species: Species::Up, grid: g.clone(), matrix: m, time: 0.0 };
        let cf = coherence_function(&rho, SUPPORT_THRESHOLD);
        // Analytic value at (x, -x): |1 - 2x^2| / (1 + 2x^2).
        let i = g.points().iter().position(|&x| (x - 1.0).abs() < 0.11).unwrap();
        let x = g.points()[i];
        let j = n - 1 - i;
        let expected = (1.0 - 2.0 * x * x).abs() / (1.0 + 2.0 * x * x);
        assert!((cf.values[(i, j)] - expected).abs() < 1e-12);
        assert!(cf.values[(i, j)] < 1.0);
    }

    #[test]
    fn averages() {
        let mut s = TimeSeries::new();
        for k in 0..=100 {
            s.push(k as f64 * 0.1, 3.0).unwrap();
        }
        assert!((time_average(&s).unwrap().value - 3.0).abs() < 1e-14);
        let mut s = TimeSeries::new();
        let n = 2000;
        for k in 0..=n {
            let t = 4.0 * std::f64::consts::PI * k as f64 / n as f64;
            s.push(t, t.sin()).unwrap();
        }
        assert!(time_average(&s).unwrap().value.abs() < 1e-10);
        let mut e: TimeSeries<f64> = TimeSeries::new();
        assert!(time_average(&e).is_err());
        e.push(1.0, 1.0).unwrap();
        assert!(e.push(0.5, 1.0).is_err());
    }

    #[test]
    fn variance_cases() {
        let region = vec![true; 3];
        let mk = |v: f64, t: f64| CoherenceField { values: DMatrix::from_element(3, 3, v), support: vec![true; 3], time: t };
        let mut constant = TimeSeries::new();
        for k in 0..10 {
            constant.push(k as f64, mk(0.7, k as f64)).unwrap();
        }
        assert!(coherence_variance(&constant, &region).unwrap().abs() < 1e-15);
        // Alternating 1/0 held for equal durations.
        let mut alt = TimeSeries::new();
        let mut t = 0.0;
        for k in 0..200 {
            let v = if k % 2 == 0 { 1.0 } else { 0.0 };
            alt.push(t, mk(v, t)).unwrap();
            alt.push(t + 0.999, mk(v, t + 0.999)).unwrap();
            t += 1.0;
        }
        let v = coherence_variance(&alt, &region).unwrap();
        assert!((v - 0.25).abs() < 2e-3, "{v}");
        assert!(coherence_variance(&alt, &[false; 3]).is_err());
    }

    #[test]
    fn interspecies_energy_quadrature() {
        let g = Arc::new(Grid::sine_dvr(300, -15.0, 15.0).unwrap());
        let p = SystemParams::default();
        let tf = ThomasFermi::new(&p).unwrap();
        let bath: Vec<C64> = g.points().iter().map(|&x| C64::new(tf.density(x).sqrt(), 0.0)).collect();
        let params_free = SystemParams { g_bi: 0.0, ..p.clone() };
        let imp = ImpurityState::ground_state(&params_free, g.clone(), None, Spin::Up).unwrap();
        let s = CoupledState { bath: BathField::new(g.clone(), bath).unwrap(), imp, time: 0.0 };
        assert_eq!(interspecies_energy(&s, &params_free), 0.0);
        // Oracle: direct quadrature against the analytic oscillator ground state.
        let n = 400_000;
        let h = 2.0 * tf.radius / n as f64;
        let oracle = 1.5
            * (0..n)
                .map(|k| {
                    let x = -tf.radius + (k as f64 + 0.5) * h;
                    tf.density(x) * (-x * x).exp() / std::f64::consts::PI.sqrt()
                })
                .sum::<f64>()
            * h;
        let e = interspecies_energy(&s, &p);
        assert!((e - oracle).abs() / oracle < 1e-4, "{e} vs {oracle}");
    }

    #[test]
    fn structure_factor_basics() {
        let g = Arc::new(Grid::sine_dvr(128, -12.0, 12.0).unwrap());
        let p0 = SystemParams { n_b: 20, g_bi: 0.0, ..Default::default() };
        let (bath, _) = relax_ground_state(&p0, g.clone(), None, 1e-10).unwrap();
        let s = CoupledState::initial(&p0, bath, g).unwrap();
        let opts = EvolveOptions { dt: 0.01, stride: 0.5, ..Default::default() };
        for (t, v) in structure_factor(&s, &p0, 5.0, &opts).unwrap() {
            assert!((v - 1.0).abs() < 1e-9, "t = {t}: {v}");
        }
        let p = SystemParams { g_bi: 1.5, ..p0 };
        let sf = structure_factor(&s, &p, 5.0, &opts).unwrap();
        assert!((sf[0].1 - 1.0).abs() < 1e-12);
        assert!(sf.iter().all(|(_, v)| *v <= 1.0 + 1e-10));
        assert!(sf.iter().any(|(_, v)| *v < 0.99));
    }

    #[test]
    fn spin_population_cases() {
        let g = Arc::new(Grid::sine_dvr(64, -8.0, 8.0).unwrap());
        let p = SystemParams { n_b: 5, g_bi: 0.0, ..Default::default() };
        let (bath, _) = relax_ground_state(&p, g.clone(), None, 1e-10).unwrap();
        let s = CoupledState::initial(&p, bath, g).unwrap();
        let (u, d) = spin_populations(&s);
        assert!(u == 0.0 && (d - 1.0).abs() < 1e-10);
        let up = CoupledState { imp: flip_all_up(&s.imp), ..s.clone() };
        let (u, d) = spin_populations(&blast_project(&up).unwrap());
        assert!((u - 1.0).abs() < 1e-10 && d == 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn coherence_bounded_for_mixtures(w in 0.0f64..1.0, x0 in -2.0f64..2.0, k in -1.0f64..1.0) {
            let g = grid();
            let a = gauss(&g, x0, k);
            let b = gauss(&g, -x0, 0.3);
            let n = g.len();
            let m = DMatrix::from_fn(n, n, |i, j| a[i] * a[j].conj() * w + b[i] * b[j].conj() * (1.0 - w));
            let rho = OneBodyDensityMatrix { species: Species::Up, grid: g.clone(), matrix: m, time: 0.0 };
            let cf = coherence_function(&rho, SUPPORT_THRESHOLD);
            prop_assert!(cf.values.iter().all(|&v| (0.0..=1.0 + 1e-10).contains(&v)));
            for i in 0..n {
                if cf.support[i] {
                    prop_assert!((cf.values[(i, i)] - 1.0).abs() < 1e-10);
                }
            }
            prop_assert!(rho.occupations().iter().all(|&o| o > -1e-10));
        }
    }
}
