//! Sine-DVR grids with hard walls, the operators living on them and the
//! spectral kinetic propagator.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Harmonic units: hbar = m_ref = omega = 1 unless stated otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub hbar: f64,
    pub mass_ref: f64,
    pub omega: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self { hbar: 1.0, mass_ref: 1.0, omega: 1.0 }
    }
}

impl UnitSystem {
    pub fn length(&self) -> f64 {
        (self.hbar / (self.mass_ref * self.omega)).sqrt()
    }

    pub fn energy(&self) -> f64 {
        self.hbar * self.omega
    }

    pub fn time(&self) -> f64 {
        1.0 / self.omega
    }

    pub fn coupling(&self) -> f64 {
        (self.hbar.powi(3) * self.omega / self.mass_ref).sqrt()
    }
}

/// Uniform grid of interior points of the box `(x_min, x_max)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    m: usize,
    x_min: f64,
    x_max: f64,
    dx: f64,
    points: Vec<f64>,
}

/// Builds the `m`-point sine-DVR grid on `(x_min, x_max)`.
pub fn build_sine_dvr(m: usize, x_min: f64, x_max: f64) -> Result<Grid> {
    Grid::sine_dvr(m, x_min, x_max)
}

impl Grid {
    pub fn sine_dvr(m: usize, x_min: f64, x_max: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {m}")));
        }
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::InvalidGrid(format!("bounds [{x_min}, {x_max}] are not increasing")));
        }
        let dx = (x_max - x_min) / (m as f64 + 1.0);
        let points = (1..=m).map(|j| x_min + j as f64 * dx).collect();
        Ok(Self { m, x_min, x_max, dx, points })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn box_length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Particle-in-a-box levels `(n pi / L)^2 / 2m`, n = 1..M.
    pub fn box_energies(&self, mass: f64) -> Vec<f64> {
        let l = self.box_length();
        (1..=self.m).map(|n| (n as f64 * PI / l).powi(2) / (2.0 * mass)).collect()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.dx
    }

    pub fn norm_sqr(&self, psi: &[C64]) -> f64 {
        psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx
    }

    /// `sum conj(a) b dx`
    pub fn inner(&self, a: &[C64], b: &[C64]) -> C64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>() * self.dx
    }

    pub fn density(&self, psi: &[C64]) -> Vec<f64> {
        psi.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.m == other.m
            && (self.x_min - other.x_min).abs() < 1e-12
            && (self.x_max - other.x_max).abs() < 1e-12
    }

    /// Coefficients of `values` in the box eigenfunctions `sqrt(2/L) sin(n pi (x - x_min)/L)`.
    pub fn sine_coefficients(&self, values: &[C64]) -> Vec<C64> {
        let mp1 = self.m as f64 + 1.0;
        let norm = (2.0 / mp1).sqrt() * self.dx.sqrt();
        (1..=self.m)
            .map(|n| {
                values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * (j + 1) as f64 * n as f64 / mp1).sin())
                    .sum::<C64>()
                    * norm
            })
            .collect()
    }

    /// Evaluates a sine series (see [`Grid::sine_coefficients`]) at an arbitrary position.
    pub fn evaluate_sine_series(&self, coeffs: &[C64], x: f64) -> C64 {
        if x <= self.x_min || x >= self.x_max {
            return C64::new(0.0, 0.0);
        }
        let l = self.box_length();
        let pref = (2.0 / l).sqrt();
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| c * (pref * ((k + 1) as f64 * PI * (x - self.x_min) / l).sin()))
            .sum()
    }

    /// Linear interpolation stencil from `self` onto `target`; points outside this box get zero.
    pub fn interpolation_to(&self, target: &Grid) -> LinearInterp {
        if self.same_as(target) {
            return LinearInterp { src_len: self.m, stencil: (0..self.m).map(|i| (i, 1.0, 0.0)).collect(), identity: true };
        }
        let stencil = target
            .points
            .iter()
            .map(|&x| {
                // Walls carry zero amplitude, so treat them as extra nodes.
                let s = (x - self.x_min) / self.dx;
                if s <= 0.0 || s >= self.m as f64 + 1.0 {
                    return (0, 0.0, 0.0);
                }
                let k = s.floor() as usize;
                let w = s - k as f64;
                match k {
                    0 => (0, w, 0.0),
                    k if k == self.m => (self.m - 1, 1.0 - w, 0.0),
                    k => (k - 1, 1.0 - w, w),
                }
            })
            .collect();
        LinearInterp { src_len: self.m, stencil, identity: false }
    }
}

/// Sparse two-point interpolation operator between grids.
#[derive(Clone, Debug)]
pub struct LinearInterp {
    src_len: usize,
    /// For each target point: index i of the left node, weight of node i, weight of node i+1.
    stencil: Vec<(usize, f64, f64)>,
    identity: bool,
}

impl LinearInterp {
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn apply(&self, src: &[f64]) -> Vec<f64> {
        if self.identity {
            return src.to_vec();
        }
        self.stencil
            .iter()
            .map(|&(i, a, b)| {
                let left = if a != 0.0 { a * src[i] } else { 0.0 };
                let right = if b != 0.0 { b * src[i + 1] } else { 0.0 };
                left + right
            })
            .collect()
    }

    /// Transpose action, scattering target-grid values back onto the source grid.
    pub fn apply_transpose(&self, tgt: &[f64]) -> Vec<f64> {
        if self.identity {
            return tgt.to_vec();
        }
        let mut out = vec![0.0; self.src_len];
        for (&(i, a, b), &v) in self.stencil.iter().zip(tgt) {
            if a != 0.0 {
                out[i] += a * v;
            }
            if b != 0.0 {
                out[i + 1] += b * v;
            }
        }
        out
    }
}

/// Real matrix over grid points.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorData {
    Dense(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    pub data: OperatorData,
    pub hermitian: bool,
}

impl Operator {
    pub fn dense(m: DMatrix<f64>) -> Self {
        let hermitian = m.is_square() && m == m.transpose();
        Self { data: OperatorData::Dense(m), hermitian }
    }

    pub fn diagonal(d: Vec<f64>) -> Self {
        Self { data: OperatorData::Diagonal(DVector::from_vec(d)), hermitian: true }
    }

    pub fn dim(&self) -> usize {
        match &self.data {
            OperatorData::Dense(m) => m.nrows(),
            OperatorData::Diagonal(d) => d.len(),
        }
    }

    pub fn diagonal_values(&self) -> Option<&[f64]> {
        match &self.data {
            OperatorData::Diagonal(d) => Some(d.as_slice()),
            OperatorData::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.data {
            OperatorData::Dense(m) => m.clone(),
            OperatorData::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeMismatch(format!("operator dims {} and {}", self.dim(), other.dim())));
        }
        let data = match (&self.data, &other.data) {
            (OperatorData::Diagonal(a), OperatorData::Diagonal(b)) => OperatorData::Diagonal(a + b),
            (OperatorData::Dense(a), OperatorData::Diagonal(d)) | (OperatorData::Diagonal(d), OperatorData::Dense(a)) => {
                let mut m = a.clone();
                for i in 0..d.len() {
                    m[(i, i)] += d[i];
                }
                OperatorData::Dense(m)
            }
            (OperatorData::Dense(a), OperatorData::Dense(b)) => OperatorData::Dense(a + b),
        };
        Ok(Operator { data, hermitian: self.hermitian && other.hermitian })
    }

    pub fn scaled(&self, s: f64) -> Operator {
        let data = match &self.data {
            OperatorData::Dense(m) => OperatorData::Dense(m * s),
            OperatorData::Diagonal(d) => OperatorData::Diagonal(d * s),
        };
        Operator { data, hermitian: self.hermitian }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        match &self.data {
            OperatorData::Diagonal(d) => v.iter().zip(d.iter()).map(|(z, &a)| z * a).collect(),
            OperatorData::Dense(m) => {
                let n = m.nrows();
                let re = DVector::from_iterator(n, v.iter().map(|z| z.re));
                let im = DVector::from_iterator(n, v.iter().map(|z| z.im));
                let a = m * re;
                let b = m * im;
                a.iter().zip(b.iter()).map(|(&x, &y)| C64::new(x, y)).collect()
            }
        }
    }

    /// `max |A - A^T|`
    pub fn symmetry_residual(&self) -> f64 {
        match &self.data {
            OperatorData::Diagonal(_) => 0.0,
            OperatorData::Dense(m) => (m - m.transpose()).amax(),
        }
    }

    /// Ascending eigenvalues and matching eigenvectors (columns).
    pub fn eigen(&self) -> Result<(Vec<f64>, DMatrix<f64>)> {
        if !self.hermitian {
            return Err(Error::InvalidParameter("eigen decomposition needs a symmetric operator".into()));
        }
        Ok(sorted_eigen(self.to_dense()))
    }
}

/// Symmetric eigen-decomposition with ascending eigenvalues and sign-fixed vectors.
pub fn sorted_eigen(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(i).into_owned();
        // Deterministic sign: largest-magnitude component positive.
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        vecs.set_column(k, &col);
    }
    (values, vecs)
}

/// Exact sine-DVR kinetic matrix `-(1/2m) d^2/dx^2` for hard walls.
pub fn kinetic_matrix(grid: &Grid, mass: f64) -> Result<Operator> {
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
    }
    let m = grid.len();
    let n1 = (m + 1) as f64;
    let pref = PI * PI / (4.0 * mass * grid.box_length().powi(2));
    let inv_sin2 = |k: usize| {
        let s = (PI * k as f64 / (2.0 * n1)).sin();
        1.0 / (s * s)
    };
    let mut t = DMatrix::zeros(m, m);
    for i in 1..=m {
        for j in i..=m {
            let v = if i == j {
                (2.0 * n1 * n1 + 1.0) / 3.0 - inv_sin2(2 * i)
            } else {
                let sign = if (j - i) % 2 == 0 { 1.0 } else { -1.0 };
                sign * (inv_sin2(j - i) - inv_sin2(i + j))
            };
            t[(i - 1, j - 1)] = pref * v;
            t[(j - 1, i - 1)] = pref * v;
        }
    }
    Ok(Operator { data: OperatorData::Dense(t), hermitian: true })
}

/// Diagonal trap `m omega^2 x^2 / 2`.
pub fn harmonic_potential(grid: &Grid, mass: f64, omega: f64) -> Result<Operator> {
    if !(mass > 0.0) || !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!("mass and omega must be positive, got {mass}, {omega}")));
    }
    Ok(Operator::diagonal(grid.points().iter().map(|x| 0.5 * mass * omega * omega * x * x).collect()))
}

/// Orthonormal DST-I (self-inverse) through a complex FFT of the odd extension.
pub struct SineTransform {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<C64>,
    scratch: Vec<C64>,
}

impl SineTransform {
    pub fn new(m: usize) -> Self {
        let n = 2 * (m + 1);
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        Self { m, fft, buf: vec![C64::new(0.0, 0.0); n], scratch }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn apply(&mut self, data: &mut [C64]) {
        let m = self.m;
        let n = 2 * (m + 1);
        let zero = C64::new(0.0, 0.0);
        self.buf[0] = zero;
        self.buf[m + 1] = zero;
        for j in 1..=m {
            self.buf[j] = data[j - 1];
            self.buf[n - j] = -data[j - 1];
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        // Y_k = -2i sum_j v_j sin(pi j k/(M+1))
        let s = 0.5 * (2.0 / (m as f64 + 1.0)).sqrt();
        for k in 1..=m {
            let y = self.buf[k];
            data[k - 1] = C64::new(-y.im * s, y.re * s);
        }
    }
}

/// `exp(-i T dt)` applied in the box eigenbasis.
pub struct KineticPropagator {
    sine: SineTransform,
    phases: Vec<C64>,
    column: Vec<C64>,
}

impl KineticPropagator {
    pub fn new(grid: &Grid, mass: f64, dt: f64) -> Self {
        let phases = grid.box_energies(mass).iter().map(|e| C64::from_polar(1.0, -e * dt)).collect();
        Self { sine: SineTransform::new(grid.len()), phases, column: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    /// Imaginary-time variant `exp(-T tau)`.
    pub fn imaginary(grid: &Grid, mass: f64, tau: f64) -> Self {
        let phases = grid.box_energies(mass).iter().map(|e| C64::new((-e * tau).exp(), 0.0)).collect();
        Self { sine: SineTransform::new(grid.len()), phases, column: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn apply(&mut self, psi: &mut [C64]) {
        self.sine.apply(psi);
        for (z, p) in psi.iter_mut().zip(&self.phases) {
            *z *= p;
        }
        self.sine.apply(psi);
    }

    /// Applies the propagator along both axes of a row-major `M x M` array.
    pub fn apply_2d(&mut self, data: &mut [C64]) {
        let m = self.sine.len();
        for row in data.chunks_mut(m) {
            self.sine.apply(row);
        }
        for c in 0..m {
            for r in 0..m {
                self.column[r] = data[r * m + c];
            }
            self.sine.apply(&mut self.column);
            for r in 0..m {
                self.column[r] *= self.phases[r];
            }
            self.sine.apply(&mut self.column);
            for r in 0..m {
                data[r * m + c] = self.column[r];
            }
        }
        for row in data.chunks_mut(m) {
            for (z, p) in row.iter_mut().zip(&self.phases) {
                *z *= p;
            }
            self.sine.apply(row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn two_point_grid() {
        let g = build_sine_dvr(2, -1.0, 1.0).unwrap();
        assert_relative_eq!(g.points()[0], -1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(g.points()[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(g.dx(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_sine_dvr(1, -1.0, 1.0).is_err());
        assert!(build_sine_dvr(0, -1.0, 1.0).is_err());
        assert!(build_sine_dvr(10, 1.0, -1.0).is_err());
        assert!(build_sine_dvr(10, 1.0, 1.0).is_err());
    }

    #[test]
    fn box_spectrum_is_exact() {
        let g = build_sine_dvr(10, -5.0, 5.0).unwrap();
        let (ev, _) = kinetic_matrix(&g, 1.0).unwrap().eigen().unwrap();
        for (a, b) in ev.iter().zip(g.box_energies(1.0)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn harmonic_levels_on_default_grid() {
        let g = build_sine_dvr(600, -50.0, 50.0).unwrap();
        let h = kinetic_matrix(&g, 1.0).unwrap().add(&harmonic_potential(&g, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(h.symmetry_residual(), 0.0);
        let (ev, _) = h.eigen().unwrap();
        assert!((ev[0] - 0.5).abs() < 1e-8);
        for (n, e) in ev.iter().take(21).enumerate() {
            assert!((e - (n as f64 + 0.5)).abs() < 1e-6, "level {n}: {e}");
        }
    }

    #[test]
    fn harmonic_potential_entries() {
        let g = build_sine_dvr(3, -4.0, 4.0).unwrap(); // points -2, 0, 2
        let v = harmonic_potential(&g, 1.0, 1.0).unwrap();
        let d = v.diagonal_values().unwrap();
        assert_eq!(d[1], 0.0);
        assert_relative_eq!(d[2], 2.0, epsilon = 1e-14);
        let g = build_sine_dvr(3, -2.0, 2.0).unwrap(); // points -1, 0, 1
        let v = harmonic_potential(&g, 133.0 / 78.0, 1.0).unwrap();
        assert_relative_eq!(v.diagonal_values().unwrap()[2], 133.0 / 156.0, epsilon = 1e-14);
        assert!(harmonic_potential(&g, -1.0, 1.0).is_err());
        assert!(kinetic_matrix(&g, 0.0).is_err());
    }

    #[test]
    fn dst_is_orthonormal_involution() {
        let m = 37;
        let mut st = SineTransform::new(m);
        let v: Vec<C64> = (0..m).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let mut w = v.clone();
        st.apply(&mut w);
        // Direct definition.
        let norm = (2.0 / (m as f64 + 1.0)).sqrt();
        for k in 0..m {
            let direct: C64 = (0..m)
                .map(|j| v[j] * (PI * (j + 1) as f64 * (k + 1) as f64 / (m as f64 + 1.0)).sin() * norm)
                .sum();
            assert!((direct - w[k]).norm() < 1e-12);
        }
        st.apply(&mut w);
        for (a, b) in v.iter().zip(&w) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn kinetic_propagator_matches_dense_exponential() {
        let g = build_sine_dvr(24, -3.0, 3.0).unwrap();
        let (ev, u) = kinetic_matrix(&g, 1.3).unwrap().eigen().unwrap();
        let dt = 0.07;
        let psi: Vec<C64> = g.points().iter().map(|x| C64::new((-x * x).exp(), 0.3 * x * (-x * x).exp())).collect();
        let mut a = psi.clone();
        KineticPropagator::new(&g, 1.3, dt).apply(&mut a);
        for i in 0..g.len() {
            let mut z = C64::new(0.0, 0.0);
            for k in 0..g.len() {
                let ck: C64 = (0..g.len()).map(|j| psi[j] * u[(j, k)]).sum();
                z += u[(i, k)] * ck * C64::from_polar(1.0, -ev[k] * dt);
            }
            assert!((z - a[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn two_dimensional_propagation_is_separable() {
        let g = build_sine_dvr(12, -3.0, 3.0).unwrap();
        let m = g.len();
        let f: Vec<C64> = g.points().iter().map(|x| C64::new((-x * x).exp(), 0.0)).collect();
        let h: Vec<C64> = g.points().iter().map(|x| C64::new(x * (-x * x).exp(), 0.1)).collect();
        let mut prop = KineticPropagator::new(&g, 1.0, 0.2);
        let mut data: Vec<C64> = (0..m * m).map(|k| f[k / m] * h[k % m]).collect();
        prop.apply_2d(&mut data);
        let (mut f2, mut h2) = (f.clone(), h.clone());
        prop.apply(&mut f2);
        prop.apply(&mut h2);
        for k in 0..m * m {
            assert!((data[k] - f2[k / m] * h2[k % m]).norm() < 1e-13);
        }
    }

    #[test]
    fn gaussian_reconstruction_off_grid() {
        let g = build_sine_dvr(600, -50.0, 50.0).unwrap();
        let f = |x: f64| (-(x - 0.3) * (x - 0.3) / 2.0).exp();
        let vals: Vec<C64> = g.points().iter().map(|&x| C64::new(f(x), 0.0)).collect();
        let c = g.sine_coefficients(&vals);
        for &x in &[-2.05, -0.41, 0.0, 0.333, 1.7777, 3.21] {
            let v = g.evaluate_sine_series(&c, x);
            assert!((v.re - f(x)).abs() < 1e-10 && v.im.abs() < 1e-12, "x = {x}: {} vs {}", v.re, f(x));
        }
        // On-grid values are reproduced as well.
        for j in [100, 300, 301] {
            let v = g.evaluate_sine_series(&c, g.points()[j]);
            assert!((v.re - f(g.points()[j])).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_transpose_is_adjoint() {
        let a = build_sine_dvr(30, -6.0, 6.0).unwrap();
        let b = build_sine_dvr(17, -4.0, 7.5).unwrap();
        let l = a.interpolation_to(&b);
        let u: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let v: Vec<f64> = (0..17).map(|i| (i as f64 * 0.7).cos()).collect();
        let lhs: f64 = l.apply(&u).iter().zip(&v).map(|(x, y)| x * y).sum();
        let rhs: f64 = u.iter().zip(l.apply_transpose(&v)).map(|(x, y)| x * y).sum();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-13);
        // Linear functions are reproduced inside the box.
        let lin: Vec<f64> = a.points().iter().map(|x| 2.0 * x + 1.0).collect();
        for (x, y) in b.points().iter().zip(l.apply(&lin)) {
            if *x > a.points()[0] && *x < a.points()[29] {
                assert_relative_eq!(y, 2.0 * x + 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn units_are_harmonic() {
        let u = UnitSystem::default();
        assert_eq!(u.length(), 1.0);
        assert_eq!(u.coupling(), 1.0);
        assert_eq!(u.energy() * u.time(), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn unitary_step_preserves_norm(seed in 0u64..1000, dt in 0.001f64..0.5, m in 8usize..64) {
            let g = build_sine_dvr(m, -4.0, 4.0).unwrap();
            let mut psi: Vec<C64> = (0..m)
                .map(|i| C64::new(((seed + i as u64) as f64 * 0.731).sin(), ((seed * 3 + i as u64) as f64 * 0.173).cos()))
                .collect();
            let n0 = g.norm_sqr(&psi);
            KineticPropagator::new(&g, 1.0, dt).apply(&mut psi);
            prop_assert!((g.norm_sqr(&psi) - n0).abs() < 1e-12 * n0.max(1.0));
        }

        #[test]
        fn kinetic_plus_potential_symmetric(m in 2usize..40, mass in 0.2f64..5.0, a in -10.0f64..-0.5, b in 0.5f64..10.0) {
            let g = build_sine_dvr(m, a, b).unwrap();
            let h = kinetic_matrix(&g, mass).unwrap().add(&harmonic_potential(&g, mass, 1.0).unwrap()).unwrap();
            prop_assert!(h.hermitian);
            prop_assert_eq!(h.symmetry_residual(), 0.0);
        }
    }
}
