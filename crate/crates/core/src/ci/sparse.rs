//! Compressed sparse row storage for real symmetric many-body operators.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::C64;

const PARALLEL_ROWS: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from per-row entry lists; duplicates are summed and zeros dropped.
    pub fn from_rows(n: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for mut r in rows {
            r.sort_unstable_by_key(|e| e.0);
            let mut k = 0;
            while k < r.len() {
                let c = r[k].0;
                let mut v = 0.0;
                while k < r.len() && r[k].0 == c {
                    v += r[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::from_rows(d.len(), d.iter().enumerate().map(|(i, &v)| vec![(i as u32, v)]).collect())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &CsrMatrix, b: f64) -> Result<CsrMatrix> {
        if self.n != other.n {
            return Err(Error::ShapeMismatch(format!("{} vs {}", self.n, other.n)));
        }
        let rows = (0..self.n)
            .map(|i| {
                let mut r: Vec<(u32, f64)> = self.row(i).map(|(c, v)| (c, a * v)).collect();
                r.extend(other.row(i).map(|(c, v)| (c, b * v)));
                r
            })
            .collect();
        Ok(Self::from_rows(self.n, rows))
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.cols[s..e].iter().copied().zip(self.vals[s..e].iter().copied())
    }

    fn row_dot<T>(&self, i: usize, x: &[T]) -> T
    where
        T: Copy + std::ops::Mul<f64, Output = T> + std::iter::Sum,
    {
        self.row(i).map(|(c, v)| x[c as usize] * v).sum()
    }

    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        if self.n >= PARALLEL_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        }
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        if self.n >= PARALLEL_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        } else {
            y.iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x));
        }
    }

    pub fn expectation(&self, x: &[C64]) -> f64 {
        let mut y = vec![C64::new(0.0, 0.0); self.n];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn symmetry_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                let t = self.get(c as usize, i);
                worst = worst.max((v - t).abs());
            }
        }
        worst
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.cols[s..e].binary_search(&(j as u32)) {
            Ok(k) => self.vals[s + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                m[(i, c as usize)] = v;
            }
        }
        m
    }

    /// Text dump: a `rows cols nnz` header then one `row col value` line per
    /// entry, zero-based, values in shortest round-trip form.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                writeln!(w, "{i} {c} {v:?}")?;
            }
        }
        Ok(())
    }

    pub fn read_triplets<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let head = lines.next().ok_or_else(|| Error::Format("empty triplet file".into()))??;
        let h: Vec<usize> = head
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad header {head:?}"))))
            .collect::<Result<_>>()?;
        if h.len() != 3 || h[0] != h[1] {
            return Err(Error::Format(format!("expected square `rows cols nnz` header, got {head:?}")));
        }
        let mut rows = vec![Vec::new(); h[0]];
        for (k, line) in lines.enumerate() {
            let line = line?;
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Format(format!("line {}: {line:?}", k + 2));
            if f.len() != 3 {
                return Err(bad());
            }
            let i: usize = f[0].parse().map_err(|_| bad())?;
            let j: u32 = f[1].parse().map_err(|_| bad())?;
            let v: f64 = f[2].parse().map_err(|_| bad())?;
            if i >= h[0] || j as usize >= h[0] {
                return Err(bad());
            }
            rows[i].push((j, v));
        }
        let m = Self::from_rows(h[0], rows);
        if m.nnz() != h[2] {
            return Err(Error::Format(format!("header promises {} entries, found {}", h[2], m.nnz())));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_round_trip() {
        let m = CsrMatrix::from_rows(3, vec![vec![(0, 1.5), (2, -0.1)], vec![], vec![(0, -0.1), (2, 1.0 / 3.0)]]);
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        let back = CsrMatrix::read_triplets(&buf[..]).unwrap();
        assert_eq!(m, back);
        assert_eq!(m.symmetry_residual(), 0.0);
    }

    #[test]
    fn duplicates_merge() {
        let m = CsrMatrix::from_rows(2, vec![vec![(1, 1.0), (1, 2.0), (0, 0.0)], vec![(0, 3.0)]]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 3.0);
        let s = m.combine(2.0, &CsrMatrix::diagonal(&[1.0, 1.0]), -1.0).unwrap();
        assert_eq!(s.get(0, 0), -1.0);
        assert_eq!(s.get(0, 1), 6.0);
    }
}
