//! Moving one-dimensional optical lattice (the conveyor).
//!
//! Two counter-propagating beams along z with a relative frequency offset
//! `chirp` form a standing wave whose antinodes travel toward -z at
//! `chirp * wavelength / 2`. The transverse envelope is Gaussian in y with
//! waist `waist`; the free-space antinode depth calibrates the peak
//! intensity through the two-line ground-state dipole coefficient.

use nalgebra::Vector2;
use std::f64::consts::PI;

use crate::constants::Transitions;
use crate::error::FieldError;
use crate::fields::grid::FieldGrid;
use crate::fields::{ground_coefficient, level_factor, Level};
use crate::units::{ghz, nm, uk, um};

/// Conveyor-lattice parameters.
#[derive(Debug, Clone)]
pub struct LatticeParams {
    /// Lattice laser wavelength (m). Sets the standing-wave kinematics
    /// (pancake spacing wavelength/2) independently of the detuning below.
    pub wavelength: f64,
    /// Gaussian envelope waist along y (m).
    pub waist: f64,
    /// Free-space antinode depth (J, >= 0).
    pub depth: f64,
    /// Frequency offset between the two arms (Hz, ordinary frequency).
    pub chirp: f64,
    /// Laser detuning from the D2 line (rad/s, negative = red).
    pub detuning_d2: f64,
    /// Standing-wave phase at (z = 0, t = 0) (rad).
    pub phase: f64,
    /// Optional static multiplicative correction (e.g. device scattering).
    /// Applied where the grid covers; unity elsewhere.
    pub scatter: Option<FieldGrid>,
}

impl Default for LatticeParams {
    fn default() -> Self {
        LatticeParams {
            wavelength: nm(852.0),
            waist: um(60.0),
            depth: uk(300.0),
            chirp: 1.2e6,
            detuning_d2: ghz(-800.0),
            phase: 0.0,
            scatter: None,
        }
    }
}

/// Lattice with its dipole coefficient and peak intensity resolved.
#[derive(Debug, Clone)]
pub struct LatticeField {
    pub params: LatticeParams,
    /// Ground-state dipole coefficient (J per W/m^2) at the lattice detuning.
    coef: f64,
    /// Peak free-space intensity (W/m^2) reproducing `params.depth`.
    i0: f64,
}

impl LatticeField {
    pub fn new(params: LatticeParams, transitions: &Transitions) -> Result<Self, FieldError> {
        let coef = ground_coefficient(params.detuning_d2, transitions)?;
        let i0 = if params.depth > 0.0 {
            params.depth / coef.abs()
        } else {
            0.0
        };
        Ok(LatticeField { params, coef, i0 })
    }

    /// Standing-wave wavenumber (rad/m).
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.params.wavelength
    }

    /// Antinode drift speed (m/s); motion is toward -z.
    pub fn antinode_speed(&self) -> f64 {
        self.params.chirp * self.params.wavelength / 2.0
    }

    /// Temporal period of the pancake train (s).
    pub fn period(&self) -> f64 {
        1.0 / self.params.chirp
    }

    /// Pancake spacing along z (m).
    pub fn pancake_spacing(&self) -> f64 {
        self.params.wavelength / 2.0
    }

    fn phase_arg(&self, z: f64, t: f64) -> f64 {
        // +pi*chirp*t moves the antinodes toward -z, the delivery direction.
        self.wavenumber() * z + PI * self.params.chirp * t + self.params.phase
    }

    fn scatter_factor(&self, pos: Vector2<f64>) -> f64 {
        match &self.params.scatter {
            Some(grid) if grid.contains(pos) => grid.sample(pos).unwrap_or(1.0),
            _ => 1.0,
        }
    }

    /// Instantaneous intensity (W/m^2).
    pub fn intensity(&self, pos: Vector2<f64>, t: f64) -> f64 {
        let env = (-2.0 * pos[0] * pos[0] / (self.params.waist * self.params.waist)).exp();
        let sw = self.phase_arg(pos[1], t).cos().powi(2);
        self.i0 * env * sw * self.scatter_factor(pos)
    }

    /// Dipole potential (J) for the given internal level.
    pub fn potential(
        &self,
        pos: Vector2<f64>,
        t: f64,
        level: Level,
        transitions: &Transitions,
    ) -> f64 {
        level_factor(level, transitions) * self.coef * self.intensity(pos, t)
    }

    /// Analytic gradient of [`LatticeField::potential`] (J/m).
    pub fn potential_grad(
        &self,
        pos: Vector2<f64>,
        t: f64,
        level: Level,
        transitions: &Transitions,
    ) -> Vector2<f64> {
        let w2 = self.params.waist * self.params.waist;
        let env = (-2.0 * pos[0] * pos[0] / w2).exp();
        let theta = self.phase_arg(pos[1], t);
        let sw = theta.cos().powi(2);
        let s = self.scatter_factor(pos);
        let base = level_factor(level, transitions) * self.coef * self.i0;
        let mut g = Vector2::new(
            base * env * sw * s * (-4.0 * pos[0] / w2),
            base * env * s * (-self.wavenumber() * (2.0 * theta).sin()),
        );
        if let Some(grid) = &self.params.scatter {
            if grid.contains(pos) {
                if let Ok(sg) = grid.grad(pos) {
                    g += base * env * sw * sg;
                }
            }
        }
        g
    }

    /// z position of the lattice antinode nearest `z_near` at time `t`.
    pub fn nearest_antinode(&self, z_near: f64, t: f64) -> f64 {
        let k = self.wavenumber();
        // Antinodes satisfy phase_arg = n*pi.
        let n = ((k * z_near + PI * self.params.chirp * t + self.params.phase) / PI).round();
        (n * PI - PI * self.params.chirp * t - self.params.phase) / k
    }

    /// Harmonic angular frequency of axial motion at an antinode (rad/s),
    /// from the quadratic expansion of the standing wave at depth `depth`.
    pub fn axial_trap_omega(&self, mass: f64) -> f64 {
        self.wavenumber() * (2.0 * self.params.depth / mass).sqrt()
    }

    /// Harmonic angular frequency of transverse (y) motion at the waist.
    pub fn radial_trap_omega(&self, mass: f64) -> f64 {
        (4.0 * self.params.depth / (mass * self.params.waist * self.params.waist)).sqrt()
    }
}
