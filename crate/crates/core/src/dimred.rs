//! Conversion between 3D scattering lengths and 1D contact couplings in a
//! tight transverse trap, and checks of the quasi-1D regime.
//!
//! Couplings follow the Hamiltonian convention `g sum_{i<j} delta(x_i - x_j)`.
//! Some references write the intraspecies term with every ordered pair, which
//! doubles the number; [`Convention::OrderedPairs`] accepts that form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::UnitSystem;

pub const HBAR: f64 = 1.054_571_817e-34;
pub const K_B: f64 = 1.380_649e-23;
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
pub const RB87_MASS: f64 = 86.909_180_527 * ATOMIC_MASS;
/// `|zeta(1/2)|`.
pub const ZETA_HALF: f64 = 1.460_354_508_809_586_8;

/// Denominators closer to zero than this are treated as sitting on the resonance.
const RESONANCE_GUARD: f64 = 1e-6;

/// Harmonic units in SI for mass `mass` (kg) and axial frequency `omega` (rad/s).
pub fn si_units(mass: f64, omega: f64) -> Result<UnitSystem> {
    if !(mass > 0.0 && omega > 0.0) || !mass.is_finite() || !omega.is_finite() {
        return Err(Error::InvalidParameter("mass and frequency must be positive".into()));
    }
    Ok(UnitSystem { hbar: HBAR, mass_ref: mass, omega })
}

/// `hbar omega / k_B` in K.
pub fn temperature_unit(units: &UnitSystem) -> f64 {
    units.energy() / K_B
}

/// Axial and transverse trap frequencies in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapGeometry {
    pub omega: f64,
    pub omega_perp: f64,
}

impl TrapGeometry {
    pub fn new(omega: f64, omega_perp: f64) -> Result<Self> {
        if !(omega > 0.0) || !(omega_perp > omega) || !omega_perp.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "need 0 < omega < omega_perp, got {omega} and {omega_perp}"
            )));
        }
        Ok(Self { omega, omega_perp })
    }

    /// `sqrt(omega_perp / omega)`.
    pub fn aspect(&self) -> f64 {
        (self.omega_perp / self.omega).sqrt()
    }

    pub fn alpha(&self, mass: f64) -> f64 {
        (HBAR / (mass * self.omega)).sqrt()
    }

    pub fn alpha_perp(&self, mass: f64) -> f64 {
        (HBAR / (mass * self.omega_perp)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// `g sum_{i<j}`.
    #[default]
    Hamiltonian,
    /// Sum over ordered pairs: twice the Hamiltonian value.
    OrderedPairs,
}

impl Convention {
    fn factor(self) -> f64 {
        match self {
            Convention::Hamiltonian => 1.0,
            Convention::OrderedPairs => 2.0,
        }
    }
}

/// 1D coupling in J m for scattering length `a` (m). `mass` is the particle
/// mass for identical particles and twice the reduced mass otherwise.
pub fn g1d_from_scattering(a: f64, geometry: &TrapGeometry, mass: f64, convention: Convention) -> Result<f64> {
    if !a.is_finite() || !(mass > 0.0) {
        return Err(Error::InvalidParameter("scattering length must be finite and mass positive".into()));
    }
    let ap = geometry.alpha_perp(mass);
    let denom = 1.0 - ZETA_HALF * a / (std::f64::consts::SQRT_2 * ap);
    if denom.abs() < RESONANCE_GUARD {
        return Err(Error::Resonance(denom));
    }
    let g_mf = 2.0 * HBAR * HBAR * a / (mass * ap * ap);
    Ok(convention.factor() * g_mf / denom)
}

/// Inverse of [`g1d_from_scattering`].
pub fn scattering_from_g1d(g: f64, geometry: &TrapGeometry, mass: f64, convention: Convention) -> Result<f64> {
    if !g.is_finite() || !(mass > 0.0) {
        return Err(Error::InvalidParameter("coupling must be finite and mass positive".into()));
    }
    let g = g / convention.factor();
    let ap = geometry.alpha_perp(mass);
    let scale = 2.0 * HBAR * HBAR / (mass * ap);
    let denom = scale + g * ZETA_HALF / std::f64::consts::SQRT_2;
    if denom.abs() < RESONANCE_GUARD * scale {
        return Err(Error::Resonance(denom / scale));
    }
    Ok(g * ap / denom)
}

/// Same map in harmonic units: `g` in `sqrt(hbar^3 omega / m)`, result in
/// units of `alpha_perp`. With [`Convention::OrderedPairs`] this is
/// `2 g / (sqrt(2) |zeta| g + 8 eta)`.
pub fn scattering_from_g1d_dimensionless(g: f64, aspect: f64, convention: Convention) -> Result<f64> {
    if !(aspect > 1.0) {
        return Err(Error::InvalidParameter(format!("aspect ratio must exceed 1, got {aspect}")));
    }
    let f = convention.factor();
    let denom = std::f64::consts::SQRT_2 * ZETA_HALF * g + 4.0 * f * aspect;
    if denom.abs() < RESONANCE_GUARD {
        return Err(Error::Resonance(denom));
    }
    Ok(2.0 * g / denom)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Ratio below the threshold.
    Satisfied,
    /// Ratio between the threshold and the upper edge of the warning band.
    Warning,
    /// Ratio above the warning band.
    Marginal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    /// Quantity that must be small.
    pub ratio: f64,
    pub regime: Regime,
}

impl Condition {
    pub fn pass(&self) -> bool {
        self.regime == Regime::Satisfied
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub small: f64,
    pub warning_edge: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { small: 0.1, warning_edge: 0.3 }
    }
}

impl Thresholds {
    fn classify(&self, ratio: f64) -> Condition {
        let regime = if ratio < self.small {
            Regime::Satisfied
        } else if ratio <= self.warning_edge {
            Regime::Warning
        } else {
            Regime::Marginal
        };
        Condition { ratio, regime }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// Bath scattering length in m.
    pub a_bb: f64,
    /// `N_B a_BB alpha_perp / alpha^2`.
    pub density: Condition,
    /// Thermal bound `(3^{4/3}/16) (alpha_perp^2 N_B^2 / (a_BB alpha))^{2/3}` in `hbar omega`.
    pub thermal_bound: f64,
    /// Same bound in K.
    pub thermal_bound_kelvin: f64,
    /// `k_B T` over the thermal bound.
    pub thermal: Condition,
    /// `N omega / omega_perp` for the impurities.
    pub impurity: Condition,
}

/// Evaluates the quasi-1D conditions for a bath of `n_b` atoms of mass
/// `mass` with dimensionless coupling `g_bb`, at temperature `temperature`
/// (K) with `n_i` impurities.
pub fn validate_1d_regime(
    g_bb: f64,
    n_b: usize,
    n_i: usize,
    mass: f64,
    geometry: &TrapGeometry,
    temperature: f64,
    thresholds: &Thresholds,
) -> Result<ValidityReport> {
    if !(g_bb > 0.0) || n_b == 0 || !(temperature >= 0.0) {
        return Err(Error::InvalidParameter("need repulsive bath, at least one atom and T >= 0".into()));
    }
    let units = si_units(mass, geometry.omega)?;
    let a_bb = scattering_from_g1d(g_bb * units.coupling(), geometry, mass, Convention::Hamiltonian)?;
    let alpha = geometry.alpha(mass);
    let ap = geometry.alpha_perp(mass);
    let nb = n_b as f64;
    let density = thresholds.classify(nb * a_bb * ap / (alpha * alpha));
    let thermal_bound = 3f64.powf(4.0 / 3.0) / 16.0 * (ap * ap * nb * nb / (a_bb * alpha)).powf(2.0 / 3.0);
    let thermal = thresholds.classify(temperature / temperature_unit(&units) / thermal_bound);
    let impurity = thresholds.classify(n_i as f64 * geometry.omega / geometry.omega_perp);
    Ok(ValidityReport {
        a_bb,
        density,
        thermal_bound,
        thermal_bound_kelvin: thermal_bound * temperature_unit(&units),
        thermal,
        impurity,
    })
}

/// Rb-87 in a 100 Hz axial and 5.1 kHz transverse trap.
pub fn rubidium_example() -> (UnitSystem, TrapGeometry) {
    let w = 2.0 * std::f64::consts::PI * 100.0;
    (
        UnitSystem { hbar: HBAR, mass_ref: RB87_MASS, omega: w },
        TrapGeometry { omega: w, omega_perp: 2.0 * std::f64::consts::PI * 5.1e3 },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn geo() -> TrapGeometry {
        rubidium_example().1
    }

    #[test]
    fn zero_and_weak_limits() {
        let g = geo();
        assert_eq!(g1d_from_scattering(0.0, &g, RB87_MASS, Convention::Hamiltonian).unwrap(), 0.0);
        assert_eq!(scattering_from_g1d(0.0, &g, RB87_MASS, Convention::Hamiltonian).unwrap(), 0.0);
        let ap = g.alpha_perp(RB87_MASS);
        let a = 1e-4 * ap;
        let mf = 2.0 * HBAR * HBAR * a / (RB87_MASS * ap * ap);
        let v = g1d_from_scattering(a, &g, RB87_MASS, Convention::Hamiltonian).unwrap();
        assert!((v / mf - 1.0).abs() < 0.01);
    }

    #[test]
    fn resonance_is_an_error() {
        let g = geo();
        let ap = g.alpha_perp(RB87_MASS);
        let a_cir = std::f64::consts::SQRT_2 * ap / ZETA_HALF;
        assert!(matches!(g1d_from_scattering(a_cir, &g, RB87_MASS, Convention::Hamiltonian), Err(Error::Resonance(_))));
        assert!(TrapGeometry::new(1.0, 0.5).is_err());
    }

    #[test]
    fn dimensionless_form_matches_si() {
        let (u, g) = rubidium_example();
        for conv in [Convention::Hamiltonian, Convention::OrderedPairs] {
            for gt in [0.1, 0.5, 1.5, -0.5] {
                let a = scattering_from_g1d(gt * u.coupling(), &g, RB87_MASS, conv).unwrap();
                let b = scattering_from_g1d_dimensionless(gt, g.aspect(), conv).unwrap() * g.alpha_perp(RB87_MASS);
                assert!((a / b - 1.0).abs() < 1e-12);
            }
        }
        // literal ordered-pair form
        let eta = g.aspect();
        let v = scattering_from_g1d_dimensionless(0.5, eta, Convention::OrderedPairs).unwrap();
        assert!((v - 1.0 / (std::f64::consts::SQRT_2 * ZETA_HALF * 0.5 + 8.0 * eta)).abs() < 1e-15);
    }

    #[test]
    fn rubidium_numbers() {
        let (u, g) = rubidium_example();
        assert!((0.5 * u.coupling() / 3.55e-38 - 1.0).abs() < 0.01);
        let r = validate_1d_regime(0.5, 100, 1, RB87_MASS, &g, 0.0, &Thresholds::default()).unwrap();
        assert!((0.065..0.075).contains(&r.density.ratio), "{}", r.density.ratio);
        assert!(r.density.pass());
        assert!((315.0..325.0).contains(&r.thermal_bound), "{}", r.thermal_bound);
        assert!((r.thermal_bound_kelvin - 1.5e-6).abs() < 0.1e-6);
        assert!(r.impurity.pass());
    }

    #[test]
    fn threshold_bands() {
        let w = 1.0;
        let g = TrapGeometry::new(w, 5.0 * w).unwrap();
        let r = validate_1d_regime(0.5, 100, 2, RB87_MASS, &g, 0.0, &Thresholds::default()).unwrap();
        assert!((r.impurity.ratio - 0.4).abs() < 1e-15);
        assert_eq!(r.impurity.regime, Regime::Marginal);
        let t = Thresholds::default();
        assert_eq!(t.classify(0.05).regime, Regime::Satisfied);
        assert_eq!(t.classify(0.2).regime, Regime::Warning);
    }

    proptest! {
        #[test]
        fn inverse_round_trip(x in -0.9f64..0.9, conv in prop_oneof![Just(Convention::Hamiltonian), Just(Convention::OrderedPairs)]) {
            let g = geo();
            let ap = g.alpha_perp(RB87_MASS);
            // a below the resonance
            let a = x * std::f64::consts::SQRT_2 * ap / ZETA_HALF;
            let g1 = g1d_from_scattering(a, &g, RB87_MASS, conv).unwrap();
            let back = scattering_from_g1d(g1, &g, RB87_MASS, conv).unwrap();
            prop_assert!((back - a).abs() <= 1e-10 * a.abs().max(1e-300));
        }

        #[test]
        fn monotone_below_resonance(x in 0.0f64..0.95, dx in 1e-4f64..0.04) {
            let g = geo();
            let ap = g.alpha_perp(RB87_MASS);
            let s = std::f64::consts::SQRT_2 * ap / ZETA_HALF;
            let f = |v: f64| g1d_from_scattering(v * s, &g, RB87_MASS, Convention::Hamiltonian).unwrap();
            prop_assert!(f(x + dx) > f(x));
        }
    }
}
