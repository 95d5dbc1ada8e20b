//! Peak extraction and labelling of measured spectra.

use serde::{Deserialize, Serialize};

use super::Spectrum;
use crate::error::{Error, Result};

/// Two neighbouring maxima closer in height than this are independent.
pub const FRINGE_RATIO: f64 = 0.12;
/// A resonance must deplete the initial state below this fraction.
pub const POLARON_REMAINDER: f64 = 0.96;
/// Half-width of the window that counts as the unshifted transition.
pub const FREE_WINDOW: f64 = 0.5;
/// Relative margin around a threshold inside which a label is flagged.
const AMBIGUITY_MARGIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakLabel {
    Polaron,
    Free,
    Fringe,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPeak {
    /// Sample index of the maximum.
    pub index: usize,
    pub delta: f64,
    pub height: f64,
    pub label: PeakLabel,
    /// For fringes, the index of the main peak they hang off.
    pub parent: Option<usize>,
    /// Whether the transfer exceeds `1 - POLARON_REMAINDER`.
    pub significant: bool,
    /// Set when a threshold decision was within 10% of flipping.
    pub ambiguous: bool,
}

fn local_maxima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        // collapse plateaus to their first index
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        let left = i == 0 || y[i - 1] < y[i];
        let right = j + 1 == n || y[j + 1] < y[i];
        if left && right && n > 1 {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// Labels every local maximum. Each maximum climbs through successively
/// taller neighbouring maxima to its main peak; it is a fringe when its
/// height relative to that main peak is below `FRINGE_RATIO`. The remaining
/// peaks are free inside `FREE_WINDOW` and polaronic elsewhere.
pub fn classify_peaks(spectrum: &Spectrum) -> Result<Vec<ClassifiedPeak>> {
    let y = &spectrum.fractions;
    if y.is_empty() {
        return Err(Error::InvalidParameter("empty spectrum".into()));
    }
    let maxima = local_maxima(y);
    let h: Vec<f64> = maxima.iter().map(|&i| y[i]).collect();
    let m = maxima.len();
    let climb = |mut k: usize| -> usize {
        loop {
            let l = (k > 0 && h[k - 1] > h[k]).then(|| k - 1);
            let r = (k + 1 < m && h[k + 1] > h[k]).then(|| k + 1);
            k = match (l, r) {
                (Some(a), Some(b)) => if h[a] >= h[b] { a } else { b },
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => return k,
            };
        }
    };
    let floor = 1.0 - POLARON_REMAINDER;
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let i = maxima[k];
        let top = climb(k);
        let delta = spectrum.detunings[i];
        let height = h[k];
        let mut ambiguous = false;
        let ratio = if top == k || h[top] <= 0.0 { 1.0 } else { height / h[top] };
        let fringe = top != k && ratio < FRINGE_RATIO;
        if top != k && (ratio / FRINGE_RATIO - 1.0).abs() < AMBIGUITY_MARGIN {
            ambiguous = true;
        }
        let label = if fringe {
            PeakLabel::Fringe
        } else if delta.abs() < FREE_WINDOW {
            PeakLabel::Free
        } else {
            PeakLabel::Polaron
        };
        let significant = height > floor;
        if !fringe && (height / floor - 1.0).abs() < AMBIGUITY_MARGIN {
            ambiguous = true;
        }
        out.push(ClassifiedPeak {
            index: i,
            delta,
            height,
            label,
            parent: fringe.then(|| maxima[top]),
            significant,
            ambiguous,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectroscopy::{lineshape, Spectrum, SpectrumMeta};
    use std::f64::consts::PI;

    fn spec(x: Vec<f64>, y: Vec<f64>) -> Spectrum {
        Spectrum::new(x, y, SpectrumMeta::default()).unwrap()
    }

    #[test]
    fn pi_pulse_curve_has_one_main_peak() {
        let x: Vec<f64> = (0..=2000).map(|i| -60.0 + 0.06 * i as f64).collect();
        let y = x.iter().map(|&d| lineshape(d, 10.0, 5.0, PI / 10.0)).collect();
        let peaks = classify_peaks(&spec(x, y)).unwrap();
        let main: Vec<_> = peaks.iter().filter(|p| p.label != PeakLabel::Fringe).collect();
        assert_eq!(main.len(), 1);
        assert!((main[0].delta - 5.0).abs() < 0.06);
        assert_eq!(main[0].label, PeakLabel::Polaron);
        let first: Vec<_> = peaks.iter().filter(|p| (p.height / main[0].height - 0.116).abs() < 0.01).collect();
        assert_eq!(first.len(), 2);
        assert!(first.iter().all(|p| p.label == PeakLabel::Fringe && p.parent == Some(main[0].index)));
        assert!(peaks.len() > 3);
    }

    #[test]
    fn free_peak_at_zero() {
        let x: Vec<f64> = (0..121).map(|i| -12.0 + 0.2 * i as f64).collect();
        let y = x.iter().map(|&d| lineshape(d, 1.0, 0.0, PI)).collect();
        let peaks = classify_peaks(&spec(x, y)).unwrap();
        let main: Vec<_> = peaks.iter().filter(|p| p.label != PeakLabel::Fringe).collect();
        assert_eq!(main.len(), 1);
        assert_eq!(main[0].label, PeakLabel::Free);
        assert!(main[0].delta.abs() < 1e-12 && main[0].significant);
    }

    #[test]
    fn comparable_peaks_are_independent() {
        let x: Vec<f64> = (0..401).map(|i| -20.0 + 0.1 * i as f64).collect();
        let g = |d: f64, c: f64| (-(d - c) * (d - c)).exp();
        let y = x.iter().map(|&d| 0.8 * g(d, -6.0) + 0.24 * g(d, 7.0)).collect();
        let peaks = classify_peaks(&spec(x, y)).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!(peaks.iter().all(|p| p.label == PeakLabel::Polaron && p.parent.is_none()));
    }

    #[test]
    fn threshold_neighbourhood_is_flagged() {
        let x: Vec<f64> = (0..401).map(|i| -20.0 + 0.1 * i as f64).collect();
        let g = |d: f64, c: f64| (-(d - c) * (d - c)).exp();
        let y = x.iter().map(|&d| 0.5 * g(d, -6.0) + 0.5 * 0.121 * g(d, 7.0)).collect();
        let peaks = classify_peaks(&spec(x, y)).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!(peaks[1].ambiguous && peaks[1].label == PeakLabel::Polaron);
        assert!(!peaks[0].ambiguous);
    }

    #[test]
    fn empty_is_error() {
        assert!(classify_peaks(&Spectrum { detunings: vec![], fractions: vec![], meta: SpectrumMeta::default() }).is_err());
    }
}
