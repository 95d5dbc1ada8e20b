//! Rectangular-pulse Rabi lineshape and the location of its maxima.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Transferred fraction after a rectangular pulse of length `t_e`.
pub fn lineshape(delta: f64, omega_plus: f64, delta_plus: f64, t_e: f64) -> f64 {
    let d = delta - delta_plus;
    let w2 = omega_plus * omega_plus + d * d;
    if w2 == 0.0 {
        return 0.0;
    }
    let w = w2.sqrt();
    let s = (0.5 * w * t_e).sin();
    (omega_plus * omega_plus / w2 * s * s).clamp(0.0, 1.0)
}

/// k-th positive root of `x = tan x`, k >= 1, located in (kπ, kπ + π/2).
pub fn tan_root(k: usize) -> f64 {
    use std::f64::consts::PI;
    assert!(k >= 1, "roots are numbered from 1");
    // x cos x - sin x changes sign on the bracket and has no pole there.
    let f = |x: f64| x * x.cos() - x.sin();
    let (mut lo, mut hi) = (k as f64 * PI, k as f64 * PI + 0.5 * PI);
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Height of the k-th side maximum, `(W t/2)^2 sin^2 x_k / x_k^2`.
pub fn side_peak_amplitude(k: usize, omega_plus: f64, t_e: f64) -> f64 {
    let x = tan_root(k);
    let u = 0.5 * omega_plus * t_e;
    u * u * x.sin().powi(2) / (x * x)
}

/// Coefficient c in A_{±1} ≈ c (W t_e)^2.
pub fn side_peak_coefficient() -> f64 {
    let x = tan_root(1);
    x.sin().powi(2) / (4.0 * x * x)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakLocation {
    /// Signed order: 0 is the main peak, ±k the k-th side maxima.
    pub order: i32,
    pub delta: f64,
    pub amplitude: f64,
}

/// Main peak plus up to `n_max` side maxima on each side. Side maxima exist
/// only while `2 x_k / t_e` exceeds the resonant Rabi frequency.
pub fn solve_peak_locations(omega_plus: f64, delta_plus: f64, t_e: f64, n_max: usize) -> Result<Vec<PeakLocation>> {
    if !(omega_plus > 0.0) || !(t_e > 0.0) {
        return Err(Error::InvalidParameter(format!("need positive Rabi frequency and duration, got {omega_plus}, {t_e}")));
    }
    let u = omega_plus * t_e;
    let mut out = vec![PeakLocation { order: 0, delta: delta_plus, amplitude: lineshape(delta_plus, omega_plus, delta_plus, t_e) }];
    for k in 1..=n_max {
        let r = 2.0 * tan_root(k) / u;
        let rad = r * r - 1.0;
        if rad <= 0.0 {
            continue;
        }
        let off = omega_plus * rad.sqrt();
        let a = side_peak_amplitude(k, omega_plus, t_e);
        out.push(PeakLocation { order: -(k as i32), delta: delta_plus - off, amplitude: a });
        out.push(PeakLocation { order: k as i32, delta: delta_plus + off, amplitude: a });
    }
    out.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn resonant_pi_pulse_transfers_everything() {
        assert!((lineshape(3.0, 10.0, 3.0, PI / 10.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn first_root_and_constant() {
        let x = tan_root(1);
        assert!((x - 4.49341).abs() < 1e-5);
        assert!((x - x.tan()).abs() < 1e-9);
        assert!((2.0 * x - 8.9868).abs() < 1e-4);
    }

    #[test]
    fn side_amplitude_for_pi_pulse() {
        let a = side_peak_amplitude(1, 10.0, PI / 10.0);
        assert!((a - 0.116438).abs() < 1e-4, "{a}");
        // 4 significant digits of the quoted prefactor.
        assert!((side_peak_coefficient() - 0.01179).abs() < 1e-5);
    }

    #[test]
    fn predicted_side_peaks_match_dense_search() {
        let (w, d0, t) = (10.0, 26.7, PI / 10.0);
        let peaks = solve_peak_locations(w, d0, t, 1).unwrap();
        assert_eq!(peaks.len(), 3);
        for p in peaks.iter().filter(|p| p.order != 0) {
            // golden-section refine of a dense grid maximum near the prediction
            let step = 1e-3;
            let mut best = (f64::NEG_INFINITY, 0.0);
            let mut x = p.delta - 2.0;
            while x < p.delta + 2.0 {
                let v = lineshape(x, w, d0, t);
                if v > best.0 {
                    best = (v, x);
                }
                x += step;
            }
            let (mut a, mut b) = (best.1 - step, best.1 + step);
            for _ in 0..100 {
                let m1 = a + 0.382 * (b - a);
                let m2 = a + 0.618 * (b - a);
                if lineshape(m1, w, d0, t) < lineshape(m2, w, d0, t) {
                    a = m1;
                } else {
                    b = m2;
                }
            }
            assert!((0.5 * (a + b) - p.delta).abs() < 1e-4);
            assert!((lineshape(p.delta, w, d0, t) - p.amplitude).abs() < 1e-10);
        }
    }

    #[test]
    fn no_side_peaks_for_long_pulses() {
        // W t_e beyond 2 x_1: radicand negative.
        let p = solve_peak_locations(1.0, 0.0, 9.5, 1).unwrap();
        assert_eq!(p.len(), 1);
        assert!(solve_peak_locations(0.0, 0.0, 1.0, 1).is_err());
    }

    proptest! {
        #[test]
        fn lineshape_bounded(d in -100.0f64..100.0, w in 0.01f64..50.0, d0 in -50.0f64..50.0, t in 0.0f64..10.0) {
            let v = lineshape(d, w, d0, t);
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn main_peak_is_global_max(w in 0.5f64..20.0, d0 in -20.0f64..20.0, frac in 0.2f64..1.0) {
            // pulse areas up to a π pulse keep the main lobe dominant
            let t = frac * std::f64::consts::PI / w;
            let main = lineshape(d0, w, d0, t);
            for i in 0..400 {
                let d = d0 - 40.0 + 0.2 * i as f64 + 0.0137;
                prop_assert!(lineshape(d, w, d0, t) <= main + 1e-12);
            }
        }
    }
}
