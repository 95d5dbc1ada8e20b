//! Lanczos ground states and Krylov time propagation.

use nalgebra::{DMatrix, SymmetricEigen};

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::grid::C64;

/// Deterministic start vector with no special symmetry.
pub fn scrambled_start(n: usize) -> Vec<f64> {
    let mut s: u64 = 0x9E37_79B9_7F4A_7C15;
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            0.5 + (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn tridiagonal(alpha: &[f64], beta: &[f64]) -> DMatrix<f64> {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    t
}

fn lowest(t: DMatrix<f64>) -> (f64, Vec<f64>) {
    let e = SymmetricEigen::new(t);
    let k = (0..e.eigenvalues.len()).min_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b])).unwrap();
    (e.eigenvalues[k], e.eigenvectors.column(k).iter().copied().collect())
}

/// Zeroes the coordinates where `mask` is false.
pub fn mask_projector(mask: &[bool]) -> impl Fn(&mut [f64]) + '_ {
    move |v: &mut [f64]| {
        v.iter_mut().zip(mask).for_each(|(x, &keep)| {
            if !keep {
                *x = 0.0
            }
        })
    }
}

/// Lowest eigenpair of a real symmetric matrix inside the range of
/// `project`, an orthogonal projector commuting with `h`. Restarted Lanczos
/// with full reorthogonalisation; stops once `||H x - E x|| < tol`.
pub fn lowest_eigenpair(
    h: &CsrMatrix,
    start: Option<&[f64]>,
    project: Option<&dyn Fn(&mut [f64])>,
    tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = h.n;
    if n == 0 {
        return Err(Error::InvalidParameter("empty matrix".into()));
    }
    let project = |v: &mut [f64]| {
        if let Some(p) = project {
            p(v)
        }
    };
    let mut x: Vec<f64> = start.map(|s| s.to_vec()).unwrap_or_else(|| scrambled_start(n));
    project(&mut x);
    let nx = dot(&x, &x).sqrt();
    if nx == 0.0 {
        return Err(Error::InvalidParameter("start vector vanishes in the requested sector".into()));
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let m_max = n.min(120);
    let mut w = vec![0.0; n];
    let mut last = (f64::NAN, f64::INFINITY);
    for _restart in 0..400 {
        let mut basis: Vec<Vec<f64>> = vec![x.clone()];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        loop {
            let v = basis.last().unwrap();
            h.apply_real(v, &mut w);
            project(&mut w);
            let a = dot(v, &w);
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            let b = dot(&w, &w).sqrt();
            if basis.len() >= m_max || b < 1e-13 * a.abs().max(1.0) {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|v| v / b).collect());
        }
        let (theta, y) = lowest(tridiagonal(&alpha, &beta));
        x.iter_mut().for_each(|v| *v = 0.0);
        for (q, c) in basis.iter().zip(&y) {
            x.iter_mut().zip(q).for_each(|(xi, qi)| *xi += c * qi);
        }
        let nx = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        h.apply_real(&x, &mut w);
        project(&mut w);
        let res = w.iter().zip(&x).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
        last = (theta, res);
        if res < tol {
            return Ok((theta, x));
        }
    }
    Err(Error::NonConvergence { iterations: 400, residual: last.1 })
}

/// Krylov settings for `exp(-i H t)`.
#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions {
    pub max_dim: usize,
    /// Local error bound per substep.
    pub tol: f64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { max_dim: 30, tol: 1e-12 }
    }
}

fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `exp(-i H dt) psi`, splitting `dt` into substeps whenever the Krylov error
/// estimate exceeds the tolerance.
pub fn krylov_propagate(h: &CsrMatrix, psi: &[C64], dt: f64, opts: &KrylovOptions) -> Result<Vec<C64>> {
    let n = h.n;
    if psi.len() != n {
        return Err(Error::ShapeMismatch(format!("state has {} amplitudes, operator {}", psi.len(), n)));
    }
    let mut cur = psi.to_vec();
    let mut remaining = dt;
    let mut w = vec![C64::new(0.0, 0.0); n];
    let mut substeps = 0usize;
    while remaining.abs() > 1e-15 * dt.abs().max(1.0) {
        substeps += 1;
        if substeps > 100_000 {
            return Err(Error::NonConvergence { iterations: substeps, residual: remaining });
        }
        let norm = cdot(&cur, &cur).re.sqrt();
        if norm == 0.0 {
            return Ok(cur);
        }
        let mut basis: Vec<Vec<C64>> = vec![cur.iter().map(|z| z / norm).collect()];
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        let mut tail = 0.0;
        loop {
            let v = basis.last().unwrap();
            h.apply(v, &mut w);
            let a = cdot(v, &w).re;
            alpha.push(a);
            for _ in 0..2 {
                for q in &basis {
                    let c = cdot(q, &w);
                    w.iter_mut().zip(q).for_each(|(wi, qi)| *wi -= c * qi);
                }
            }
            let b = cdot(&w, &w).re.sqrt();
            if b < 1e-13 * a.abs().max(1.0) {
                break;
            }
            if basis.len() >= opts.max_dim.min(n) {
                tail = b;
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|z| z / b).collect());
        }
        let m = alpha.len();
        let eig = SymmetricEigen::new(tridiagonal(&alpha, &beta));
        let coeffs = |tau: f64| -> Vec<C64> {
            (0..m)
                .map(|r| {
                    (0..m)
                        .map(|k| {
                            let u = eig.eigenvectors[(r, k)] * eig.eigenvectors[(0, k)];
                            C64::from_polar(u, -eig.eigenvalues[k] * tau)
                        })
                        .sum()
                })
                .collect()
        };
        let mut tau = remaining;
        let mut y = coeffs(tau);
        if tail > 0.0 {
            while tail * y[m - 1].norm() > opts.tol {
                tau *= 0.5;
                if tau.abs() < 1e-14 * dt.abs() {
                    return Err(Error::NonConvergence { iterations: substeps, residual: tail });
                }
                y = coeffs(tau);
            }
        }
        cur.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for (q, c) in basis.iter().zip(&y) {
            let c = c * norm;
            cur.iter_mut().zip(q).for_each(|(z, qi)| *z += c * qi);
        }
        // the propagator is unitary; strip accumulated rounding from the norm
        let got = cdot(&cur, &cur).re.sqrt();
        cur.iter_mut().for_each(|z| *z *= norm / got);
        remaining -= tau;
    }
    Ok(cur)
}
