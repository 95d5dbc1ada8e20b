//! Occupation-number bases for the bath and the spinor impurities.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::Statistics;

/// Occupation vector of one species.
pub type Occupation = Vec<u8>;

/// Default ceiling on the number of amplitudes.
pub const DEFAULT_CAP: usize = 50_000_000;

/// Product basis `bath ⊗ impurity`. Impurity modes are numbered
/// `spin * d_i + orbital` with spin 0 = up, 1 = down.
#[derive(Clone, Debug)]
pub struct FockBasis {
    pub n_b: usize,
    pub d_b: usize,
    pub n_i: usize,
    pub d_i: usize,
    pub statistics: Statistics,
    /// Fixed number of up impurities, if the basis is restricted to one sector.
    pub spin_filter: Option<usize>,
    bath: Vec<Occupation>,
    imp: Vec<Occupation>,
    bath_index: HashMap<Occupation, usize>,
    imp_index: HashMap<Occupation, usize>,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of ways to put `n` bosons into `d` modes.
pub fn multiset_count(n: usize, d: usize) -> f64 {
    if d == 0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    binomial(n + d - 1, n)
}

/// All occupations of `n` particles in `d` modes, largest first-mode occupation first.
fn enumerate(n: usize, d: usize, max_per_mode: usize) -> Vec<Occupation> {
    fn rec(n: usize, mode: usize, cur: &mut Occupation, cap: usize, out: &mut Vec<Occupation>) {
        if mode + 1 == cur.len() {
            if n <= cap {
                cur[mode] = n as u8;
                out.push(cur.clone());
                cur[mode] = 0;
            }
            return;
        }
        for k in (0..=n.min(cap)).rev() {
            cur[mode] = k as u8;
            rec(n - k, mode + 1, cur, cap, out);
        }
        cur[mode] = 0;
    }
    let mut out = Vec::new();
    if d == 0 {
        if n == 0 {
            out.push(vec![]);
        }
        return out;
    }
    rec(n, 0, &mut vec![0; d], max_per_mode, &mut out);
    out
}

impl FockBasis {
    pub fn new(
        n_b: usize,
        d_b: usize,
        n_i: usize,
        d_i: usize,
        statistics: Statistics,
        spin_filter: Option<usize>,
        cap: usize,
    ) -> Result<Self> {
        if (n_b > 0 && d_b == 0) || d_i == 0 {
            return Err(Error::InvalidParameter("orbital counts must be at least 1".into()));
        }
        if n_b > 255 || n_i > 255 {
            return Err(Error::InvalidParameter("particle numbers above 255 are not supported".into()));
        }
        if let Some(u) = spin_filter {
            if u > n_i {
                return Err(Error::InvalidParameter(format!("{u} up impurities requested out of {n_i}")));
            }
        }
        let n_bath = multiset_count(n_b, d_b);
        let n_imp = match statistics {
            Statistics::Boson => multiset_count(n_i, 2 * d_i),
            Statistics::Fermion => binomial(2 * d_i, n_i),
        };
        let required = n_bath * n_imp;
        if required > cap as f64 {
            return Err(Error::DimensionCap { required: required.min(usize::MAX as f64) as usize, cap });
        }
        let bath = enumerate(n_b, d_b, n_b);
        let per_mode = if statistics == Statistics::Fermion { 1 } else { n_i };
        let mut imp = enumerate(n_i, 2 * d_i, per_mode);
        if let Some(u) = spin_filter {
            imp.retain(|o| o[..d_i].iter().map(|&x| x as usize).sum::<usize>() == u);
        }
        let bath_index = bath.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        let imp_index = imp.iter().enumerate().map(|(i, o)| (o.clone(), i)).collect();
        Ok(Self { n_b, d_b, n_i, d_i, statistics, spin_filter, bath, imp, bath_index, imp_index })
    }

    pub fn dim(&self) -> usize {
        self.bath.len() * self.imp.len()
    }

    pub fn bath_dim(&self) -> usize {
        self.bath.len()
    }

    pub fn imp_dim(&self) -> usize {
        self.imp.len()
    }

    pub fn bath_states(&self) -> &[Occupation] {
        &self.bath
    }

    pub fn imp_states(&self) -> &[Occupation] {
        &self.imp
    }

    pub fn bath_index(&self, o: &[u8]) -> Option<usize> {
        self.bath_index.get(o).copied()
    }

    pub fn imp_index(&self, o: &[u8]) -> Option<usize> {
        self.imp_index.get(o).copied()
    }

    pub fn index(&self, bath: usize, imp: usize) -> usize {
        bath * self.imp.len() + imp
    }

    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.imp.len(), idx % self.imp.len())
    }

    /// Up-spin impurity count of impurity configuration `i`.
    pub fn n_up(&self, i: usize) -> usize {
        self.imp[i][..self.d_i].iter().map(|&x| x as usize).sum()
    }
}

/// `c_mode |occ>`; returns the prefactor or `None` if the result vanishes.
pub fn annihilate(occ: &mut [u8], mode: usize, stats: Statistics) -> Option<f64> {
    let n = occ[mode];
    if n == 0 {
        return None;
    }
    let f = match stats {
        Statistics::Boson => (n as f64).sqrt(),
        Statistics::Fermion => sign_before(occ, mode),
    };
    occ[mode] = n - 1;
    Some(f)
}

/// `c†_mode |occ>`; returns the prefactor or `None` if the result vanishes.
pub fn create(occ: &mut [u8], mode: usize, stats: Statistics) -> Option<f64> {
    let n = occ[mode];
    let f = match stats {
        Statistics::Boson => (n as f64 + 1.0).sqrt(),
        Statistics::Fermion => {
            if n == 1 {
                return None;
            }
            sign_before(occ, mode)
        }
    };
    occ[mode] = n + 1;
    Some(f)
}

fn sign_before(occ: &[u8], mode: usize) -> f64 {
    let c: u32 = occ[..mode].iter().map(|&x| x as u32).sum();
    if c % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `c†_to c_from |occ>` as (new occupation, amplitude).
pub fn hop(occ: &[u8], to: usize, from: usize, stats: Statistics) -> Option<(Occupation, f64)> {
    let mut o = occ.to_vec();
    let a = annihilate(&mut o, from, stats)?;
    let b = create(&mut o, to, stats)?;
    Some((o, a * b))
}
