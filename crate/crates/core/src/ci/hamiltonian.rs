//! Second-quantised Hamiltonian in a fixed orbital basis.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::basis::{annihilate, create, hop, FockBasis, Occupation};
use super::sparse::CsrMatrix;
use crate::coupled::PulseSpec;
use crate::error::{Error, Result};
use crate::params::Statistics;

/// Contact integrals `sum_x dx a_i a_j b_k b_l`, flattened as `[(i*da+j)*db^2 + k*db + l]`.
#[derive(Clone, Debug)]
pub struct ContactTensor {
    da: usize,
    db: usize,
    data: Vec<f64>,
}

impl ContactTensor {
    pub fn new(a: &[Vec<f64>], b: &[Vec<f64>], dx: f64) -> Result<Self> {
        let m = a.first().or(b.first()).map_or(0, |v| v.len());
        if a.iter().chain(b).any(|v| v.len() != m) {
            return Err(Error::ShapeMismatch("orbitals sampled on different grids".into()));
        }
        let pairs = |o: &[Vec<f64>]| {
            let d = o.len();
            DMatrix::from_fn(d * d, m, |r, x| o[r / d][x] * o[r % d][x])
        };
        let (pa, pb) = (pairs(a), pairs(b));
        let v = (&pa * pb.transpose()) * dx;
        let (da, db) = (a.len(), b.len());
        let mut data = vec![0.0; da * da * db * db];
        for r in 0..da * da {
            for c in 0..db * db {
                data[r * db * db + c] = v[(r, c)];
            }
        }
        Ok(Self { da, db, data })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[((i * self.da + j) * self.db + k) * self.db + l]
    }
}

/// Single-species rows: orbital energies plus `(g/2) sum V c†c†cc`.
/// `orbital_of` maps a mode to its spatial orbital, so that spinor modes share
/// integrals.
fn species_rows(
    states: &[Occupation],
    index: impl Fn(&[u8]) -> Option<usize> + Sync,
    stats: Statistics,
    mode_energy: &[f64],
    orbital_of: &[usize],
    g: f64,
    v: &ContactTensor,
) -> Vec<Vec<(u32, f64)>> {
    let modes = mode_energy.len();
    // modes are grouped in spin blocks of one orbital set each
    let block = orbital_of.iter().max().map_or(1, |m| m + 1);
    states
        .par_iter()
        .map(|occ| {
            let mut row = Vec::new();
            let e: f64 = occ.iter().zip(mode_energy).map(|(&n, &e)| n as f64 * e).sum();
            row.push((index(occ).unwrap() as u32, e));
            if g == 0.0 {
                return row;
            }
            let occupied: Vec<usize> = (0..modes).filter(|&m| occ[m] > 0).collect();
            for &l in &occupied {
                let mut o1 = occ.clone();
                let f1 = annihilate(&mut o1, l, stats).unwrap();
                for k in 0..modes {
                    let mut o2 = o1.clone();
                    let Some(f2) = annihilate(&mut o2, k, stats) else { continue };
                    for j in 0..modes {
                        let mut o3 = o2.clone();
                        let Some(f3) = create(&mut o3, j, stats) else { continue };
                        for i in 0..modes {
                            let mut o4 = o3.clone();
                            let Some(f4) = create(&mut o4, i, stats) else { continue };
                            let (oi, oj, ok, ol) = (orbital_of[i], orbital_of[j], orbital_of[k], orbital_of[l]);
                            // spin is conserved along each particle line: i pairs with l, j with k
                            if i / block != l / block || j / block != k / block {
                                continue;
                            }
                            let val = 0.5 * g * v.get(oi, oj, ok, ol) * f1 * f2 * f3 * f4;
                            if val != 0.0 {
                                row.push((index(&o4).unwrap() as u32, val));
                            }
                        }
                    }
                }
            }
            row
        })
        .collect()
}

/// Pulse-independent pieces plus the spin operators.
#[derive(Clone, Debug)]
pub struct HamiltonianParts {
    /// One-body, bath-bath, impurity-impurity and bath-impurity terms.
    pub h0: CsrMatrix,
    /// Bath-impurity contact term alone.
    pub h_bi: CsrMatrix,
    /// `N_up - N_down` per basis state.
    pub sz: Vec<f64>,
    /// `sum_k (a†_{k up} a_{k down} + h.c.)`; empty when the basis fixes the spin sector.
    pub sx: Option<CsrMatrix>,
}

pub struct Couplings {
    pub g_bb: f64,
    pub g_bi: f64,
    pub g_ii: f64,
}

pub fn assemble_parts(
    basis: &FockBasis,
    bath_orbitals: &[Vec<f64>],
    bath_energies: &[f64],
    imp_orbitals: &[Vec<f64>],
    imp_energies: &[f64],
    dx: f64,
    c: &Couplings,
) -> Result<HamiltonianParts> {
    let (d_b, d_i) = (basis.d_b, basis.d_i);
    if bath_orbitals.len() != d_b || bath_energies.len() != d_b || imp_orbitals.len() != d_i || imp_energies.len() != d_i {
        return Err(Error::ShapeMismatch(format!(
            "basis wants {d_b} bath and {d_i} impurity orbitals, got {} and {}",
            bath_orbitals.len(),
            imp_orbitals.len()
        )));
    }
    let v_bb = ContactTensor::new(bath_orbitals, bath_orbitals, dx)?;
    let v_ii = ContactTensor::new(imp_orbitals, imp_orbitals, dx)?;
    let v_bi = ContactTensor::new(bath_orbitals, imp_orbitals, dx)?;

    let bath_rows = species_rows(
        basis.bath_states(),
        |o| basis.bath_index(o),
        Statistics::Boson,
        bath_energies,
        &(0..d_b).collect::<Vec<_>>(),
        c.g_bb,
        &v_bb,
    );
    let imp_energy: Vec<f64> = imp_energies.iter().chain(imp_energies).copied().collect();
    let imp_orbital_of: Vec<usize> = (0..2 * d_i).map(|m| m % d_i).collect();
    let imp_rows = species_rows(
        basis.imp_states(),
        |o| basis.imp_index(o),
        basis.statistics,
        &imp_energy,
        &imp_orbital_of,
        c.g_ii,
        &v_ii,
    );

    // b†_i b_j on every bath state, and a†_{k up} a_{l up} on every impurity state
    let bath_hops: Vec<Vec<(usize, usize, usize, f64)>> = basis
        .bath_states()
        .iter()
        .map(|o| {
            let mut out = Vec::new();
            for j in (0..d_b).filter(|&j| o[j] > 0) {
                for i in 0..d_b {
                    if let Some((n, f)) = hop(o, i, j, Statistics::Boson) {
                        out.push((basis.bath_index(&n).unwrap(), i, j, f));
                    }
                }
            }
            out
        })
        .collect();
    let imp_hops: Vec<Vec<(usize, usize, usize, f64)>> = basis
        .imp_states()
        .iter()
        .map(|o| {
            let mut out = Vec::new();
            for l in (0..d_i).filter(|&l| o[l] > 0) {
                for k in 0..d_i {
                    if let Some((n, f)) = hop(o, k, l, basis.statistics) {
                        out.push((basis.imp_index(&n).unwrap(), k, l, f));
                    }
                }
            }
            out
        })
        .collect();

    let n = basis.dim();
    let di = basis.imp_dim();
    let bi_rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let (b, i) = basis.split(r);
            let mut row = Vec::new();
            if c.g_bi == 0.0 {
                return row;
            }
            for &(b2, bi, bj, f1) in &bath_hops[b] {
                for &(i2, ik, il, f2) in &imp_hops[i] {
                    let v = c.g_bi * v_bi.get(bi, bj, ik, il) * f1 * f2;
                    if v != 0.0 {
                        row.push(((b2 * di + i2) as u32, v));
                    }
                }
            }
            row
        })
        .collect();
    let h_bi = CsrMatrix::from_rows(n, bi_rows);

    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let (b, i) = basis.split(r);
            let mut row: Vec<(u32, f64)> = h_bi.row(r).collect();
            row.extend(bath_rows[b].iter().map(|&(b2, v)| ((b2 as usize * di + i) as u32, v)));
            row.extend(imp_rows[i].iter().map(|&(i2, v)| ((b * di + i2 as usize) as u32, v)));
            row
        })
        .collect();
    let h0 = CsrMatrix::from_rows(n, rows);

    let sz: Vec<f64> = (0..n)
        .map(|r| {
            let up = basis.n_up(basis.split(r).1) as f64;
            2.0 * up - basis.n_i as f64
        })
        .collect();
    let sx = if basis.spin_filter.is_some() {
        None
    } else {
        let flips: Vec<Vec<(u32, f64)>> = (0..n)
            .map(|r| {
                let (b, i) = basis.split(r);
                let o = &basis.imp_states()[i];
                let mut row = Vec::new();
                for k in 0..d_i {
                    for (to, from) in [(k, k + d_i), (k + d_i, k)] {
                        if let Some((n2, f)) = hop(o, to, from, basis.statistics) {
                            row.push(((b * di + basis.imp_index(&n2).unwrap()) as u32, f));
                        }
                    }
                }
                row
            })
            .collect();
        Some(CsrMatrix::from_rows(n, flips))
    };
    Ok(HamiltonianParts { h0, h_bi, sz, sx })
}

impl HamiltonianParts {
    /// Full matrix under a constant drive: `h0 - (D/2) sz + (W/2) sx`.
    pub fn with_pulse(&self, pulse: &PulseSpec) -> Result<CsrMatrix> {
        pulse.validate()?;
        let diag: Vec<f64> = self.sz.iter().map(|s| -0.5 * pulse.detuning * s).collect();
        let mut m = self.h0.combine(1.0, &CsrMatrix::diagonal(&diag), 1.0)?;
        if pulse.omega_r0 != 0.0 {
            let sx = self
                .sx
                .as_ref()
                .ok_or_else(|| Error::Unsupported("spin-filtered basis cannot carry a drive".into()))?;
            m = m.combine(1.0, sx, 0.5 * pulse.omega_r0)?;
        }
        Ok(m)
    }
}
