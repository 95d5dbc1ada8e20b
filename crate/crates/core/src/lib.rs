//! Pump-probe radiofrequency spectroscopy of impurities immersed in a trapped
//! one-dimensional Bose gas.

pub mod error;
pub mod eth;
pub mod ci;
pub mod coupled;
pub mod dimred;
pub mod grid;
pub mod io;
pub mod meanfield;
pub mod observables;
pub mod params;
pub mod relaxation;
pub mod spectroscopy;

pub use error::{Error, Result};
pub use grid::{build_sine_dvr, harmonic_potential, kinetic_matrix, Grid, Operator, UnitSystem, C64};
pub use meanfield::{propagate_gp, relax_ground_state, thomas_fermi_profile, BathField};
pub use params::{Statistics, SystemParams};
