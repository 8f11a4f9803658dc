//! Interface-unit conversions.
//!
//! Internals are SI throughout; configuration files and CSV headers use the
//! bench units people actually type: um, nm, ns, uK, MHz (ordinary frequency),
//! GHz, and uW. Angular frequencies (rad/s) carry the 2*pi explicitly.

use std::f64::consts::PI;

/// Micrometers to meters.
pub fn um(x: f64) -> f64 {
    x * 1e-6
}

/// Nanometers to meters.
pub fn nm(x: f64) -> f64 {
    x * 1e-9
}

/// Meters to micrometers.
pub fn to_um(x: f64) -> f64 {
    x * 1e6
}

/// Meters to nanometers.
pub fn to_nm(x: f64) -> f64 {
    x * 1e9
}

/// Nanoseconds to seconds.
pub fn ns(x: f64) -> f64 {
    x * 1e-9
}

/// Microseconds to seconds.
pub fn us(x: f64) -> f64 {
    x * 1e-6
}

/// Seconds to nanoseconds.
pub fn to_ns(x: f64) -> f64 {
    x * 1e9
}

/// Microkelvin to joules (k_B * T).
pub fn uk(x: f64) -> f64 {
    x * 1e-6 * crate::constants::KB
}

/// Joules to microkelvin.
pub fn to_uk(x: f64) -> f64 {
    x / (1e-6 * crate::constants::KB)
}

/// Ordinary frequency in MHz to angular frequency (rad/s).
pub fn mhz(x: f64) -> f64 {
    2.0 * PI * x * 1e6
}

/// Angular frequency (rad/s) to ordinary frequency in MHz.
pub fn to_mhz(x: f64) -> f64 {
    x / (2.0 * PI * 1e6)
}

/// Ordinary frequency in GHz to angular frequency (rad/s).
pub fn ghz(x: f64) -> f64 {
    2.0 * PI * x * 1e9
}

/// Microwatts to watts.
pub fn uw(x: f64) -> f64 {
    x * 1e-6
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert!((to_um(um(12.5)) - 12.5).abs() < 1e-12);
        assert!((to_ns(ns(833.0)) - 833.0).abs() < 1e-9);
        assert!((to_uk(uk(300.0)) - 300.0).abs() < 1e-12);
        assert!((to_mhz(mhz(5.2227)) - 5.2227).abs() < 1e-12);
    }

    #[test]
    fn mhz_carries_two_pi() {
        assert!((mhz(1.0) - 2.0 * PI * 1e6).abs() < 1e-6);
    }
}
