//! Least-squares fit of the rectangular-pulse lineshape.

use serde::{Deserialize, Serialize};

use super::lineshape::lineshape;
use super::Spectrum;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceFit {
    pub omega_plus: f64,
    pub delta_plus: f64,
    /// Sum of squared residuals at the optimum.
    pub residual: f64,
}

/// Value and gradient of the lineshape with respect to (W+, D+).
fn model_grad(delta: f64, a: f64, d0: f64, t: f64) -> (f64, [f64; 2]) {
    let d = delta - d0;
    let w2 = a * a + d * d;
    let w = w2.sqrt();
    let s = (0.5 * w * t).sin();
    let s2 = s * s;
    let sw = (w * t).sin();
    let f = a * a / w2 * s2;
    let df_dw = -2.0 * a * a / (w2 * w) * s2 + a * a / w2 * 0.5 * t * sw;
    let da = 2.0 * a / w2 * s2 + df_dw * a / w;
    let dd = df_dw * (-d / w);
    (f, [da, dd])
}

fn sse(x: &[f64], y: &[f64], a: f64, d0: f64, t: f64) -> f64 {
    x.iter().zip(y).map(|(&xi, &yi)| (lineshape(xi, a, d0, t) - yi).powi(2)).sum()
}

/// Levenberg-Marquardt from one starting point.
fn levenberg_marquardt(x: &[f64], y: &[f64], t: f64, start: (f64, f64)) -> (f64, f64, f64) {
    let (mut a, mut d0) = start;
    let mut cost = sse(x, y, a, d0, t);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (mut jtj, mut jtr) = ([[0.0; 2]; 2], [0.0; 2]);
        for (&xi, &yi) in x.iter().zip(y) {
            let (f, g) = model_grad(xi, a, d0, t);
            let r = yi - f;
            for i in 0..2 {
                jtr[i] += g[i] * r;
                for j in 0..2 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let m01 = jtj[0][1];
            let det = m00 * m11 - m01 * m01;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let da = (m11 * jtr[0] - m01 * jtr[1]) / det;
            let dd = (m00 * jtr[1] - m01 * jtr[0]) / det;
            let (na, nd) = ((a + da).abs(), d0 + dd);
            let c = sse(x, y, na, nd, t);
            if c < cost {
                let small = (na - a).abs() <= 1e-13 * (1.0 + a) && (nd - d0).abs() <= 1e-13 * (1.0 + d0.abs());
                a = na;
                d0 = nd;
                let rel = (cost - c) / cost.max(1e-300);
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !(small || rel < 1e-15);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, d0, cost)
}

/// Fit on raw samples; data need not lie in [0, 1] (noisy input is fine).
pub fn fit_lineshape_samples(detunings: &[f64], values: &[f64], t_e: f64) -> Result<ResonanceFit> {
    if detunings.len() != values.len() {
        return Err(Error::ShapeMismatch(format!("{} detunings vs {} values", detunings.len(), values.len())));
    }
    if detunings.len() < 5 {
        return Err(Error::DegenerateFit(format!("need at least 5 samples, got {}", detunings.len())));
    }
    if !(t_e > 0.0) {
        return Err(Error::InvalidParameter(format!("pulse duration must be positive, got {t_e}")));
    }
    let (mut imax, mut ymax, mut ymin) = (0, f64::NEG_INFINITY, f64::INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > ymax {
            ymax = v;
            imax = i;
        }
        ymin = ymin.min(v);
    }
    if !(ymax - ymin > 1e-6) {
        return Err(Error::DegenerateFit("spectrum is flat".into()));
    }
    // Peak height sin^2(W t/2) gives W on the first branch; also try the
    // pi-pulse value and the half-width estimate.
    let h = ymax.clamp(1e-6, 1.0);
    let w_height = 2.0 * h.sqrt().asin() / t_e;
    let w_pi = std::f64::consts::PI / t_e;
    let half = 0.5 * ymax;
    let mut lo = imax;
    while lo > 0 && values[lo] > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < values.len() && values[hi] > half {
        hi += 1;
    }
    let fwhm = (detunings[hi] - detunings[lo]).abs().max(1e-6);
    // FWHM of a pi pulse is about 1.6 W.
    let w_width = fwhm / 1.6;
    let span = detunings[detunings.len() - 1] - detunings[0];
    let step = span / (detunings.len() - 1) as f64;
    let mut best: Option<(f64, f64, f64)> = None;
    for &w in &[w_height, w_pi, w_width] {
        for k in [-1.0, 0.0, 1.0] {
            let start = (w.max(1e-6), detunings[imax] + 0.5 * k * step);
            let r = levenberg_marquardt(detunings, values, t_e, start);
            if best.map_or(true, |b| r.2 < b.2) {
                best = Some(r);
            }
        }
    }
    let (a, d0, res) = best.expect("at least one start");
    if !(a > 0.0) || !a.is_finite() || !d0.is_finite() {
        return Err(Error::DegenerateFit(format!("fit collapsed to W={a}, D={d0}")));
    }
    Ok(ResonanceFit { omega_plus: a, delta_plus: d0, residual: res })
}

pub fn fit_lineshape(spectrum: &Spectrum, t_e: f64) -> Result<ResonanceFit> {
    fit_lineshape_samples(&spectrum.detunings, &spectrum.fractions, t_e)
}
