//! Physical constants (SI) and cesium line data.
//!
//! Line data follow the usual Cs D-line reference values. Decay rates and
//! angular frequencies are stored as angular quantities (rad/s).

use std::f64::consts::PI;

/// Speed of light in vacuum (m/s).
pub const C: f64 = 299_792_458.0;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Planck constant (J s).
pub const H: f64 = 6.626_070_15e-34;

/// Boltzmann constant (J/K).
pub const KB: f64 = 1.380_649e-23;

/// Cesium-133 atomic mass (kg).
pub const CS_MASS: f64 = 2.206_946_557e-25;

/// Cs D2 (6S1/2 -> 6P3/2) transition wavelength in vacuum (m).
pub const CS_D2_WAVELENGTH: f64 = 852.347_275_82e-9;

/// Cs D2 angular frequency (rad/s).
pub const CS_D2_OMEGA: f64 = 2.0 * PI * 351.725_718_50e12;

/// Cs D2 natural linewidth (rad/s).
pub const CS_D2_GAMMA: f64 = 2.0 * PI * 5.2227e6;

/// Cs D1 (6S1/2 -> 6P1/2) transition wavelength in vacuum (m).
pub const CS_D1_WAVELENGTH: f64 = 894.592_959_86e-9;

/// Cs D1 angular frequency (rad/s).
pub const CS_D1_OMEGA: f64 = 2.0 * PI * 335.116_048_807e12;

/// Cs D1 natural linewidth (rad/s).
pub const CS_D1_GAMMA: f64 = 2.0 * PI * 4.5612e6;

/// D2/D1 fine-structure splitting (rad/s), positive.
pub const CS_FINE_SPLITTING: f64 = CS_D2_OMEGA - CS_D1_OMEGA;

/// Single-photon recoil speed on the D2 line (m/s): hbar k / m.
pub fn cs_d2_recoil_speed() -> f64 {
    HBAR * (2.0 * PI / CS_D2_WAVELENGTH) / CS_MASS
}

/// Reference transition data used by the dipole-potential formula.
///
/// The two-line ground-state expression needs both D-line detunings plus the
/// linewidth and frequency of the reference line used in its prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transitions {
    /// D2 angular frequency (rad/s).
    pub omega_d2: f64,
    /// D1 angular frequency (rad/s).
    pub omega_d1: f64,
    /// D2 natural linewidth (rad/s).
    pub gamma_d2: f64,
    /// D1 natural linewidth (rad/s).
    pub gamma_d1: f64,
    /// Excited-state light shift expressed as a ratio of the ground shift.
    pub excited_shift_ratio: f64,
}

impl Default for Transitions {
    fn default() -> Self {
        Transitions {
            omega_d2: CS_D2_OMEGA,
            omega_d1: CS_D1_OMEGA,
            gamma_d2: CS_D2_GAMMA,
            gamma_d1: CS_D1_GAMMA,
            excited_shift_ratio: 1.0,
        }
    }
}
