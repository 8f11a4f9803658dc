//! Simulation library for cesium atom delivery to an alligator photonic-crystal
//! waveguide (APCW) by a moving optical lattice, and for the guided-mode (GM)
//! spectroscopy used to read the delivery out.
//!
//! The crate is organized around the stages of a synthetic experiment:
//!
//! * [`fields`] — optical and surface potentials on the 2D transverse plane
//!   (free-space conveyor lattice, guided-mode beams, Casimir-Polder surface
//!   attraction) plus the device cross-section geometry.
//! * [`dynamics`] — thermal ensemble initialization in the lattice pancakes and
//!   adaptive trajectory integration with crash/exit detection.
//! * [`optics`] — transfer-matrix transmission of a weak guided probe through
//!   the instantaneous atom chain, swept over probe detuning and time.
//! * [`clocking`] — photon time-tag synthesis, folding against lattice sync
//!   markers, normalization, and timing alignment.
//! * [`analysis`] — effective single-mode model fits of transmission spectra
//!   and time-resolved fit series.
//! * [`trapping`] — two-color guided-mode dipole trap in the device gap and a
//!   single-photon capture Monte Carlo.
//! * [`config`] / [`pipeline`] — validated run configuration and the chained
//!   desk-scale pipeline with manifest output.
//!
//! All internal quantities are SI (meters, seconds, joules, radians per
//! second). Conversions from interface units (um, ns, uK, MHz, uW) live in
//! [`units`].

pub mod analysis;
pub mod clocking;
pub mod config;
pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod io;
pub mod optics;
pub mod pipeline;
pub mod trapping;
pub mod units;

pub use error::{Error, Result};
