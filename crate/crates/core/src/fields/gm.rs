//! Guided-mode (GM) beams of the device.
//!
//! GM light lives in the dielectric and its near field; the parametric model
//! used here is an evanescent decay with configurable decay constant kappa
//! outside the structure, in one of two gap styles:
//!
//! * `Plateau` — decay measured from the hull of the cross section, so the
//!   vacuum gap sits at the peak intensity (flat across the gap). Reasonable
//!   for Stark-shifting beams where only the near-field scale matters.
//! * `TwoWall` — sum of evanescent tails from each beam individually, giving
//!   the intra-gap structure (bright walls, dimmer center) that two-color
//!   trapping relies on.
//!
//! A measured/simulated relative-intensity grid may replace the parametric
//! profile. The axial (x) dependence is a separate contrast factor used by
//! the probe optics.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::constants::{Transitions, CS_FINE_SPLITTING};
use crate::error::FieldError;
use crate::fields::geometry::Geometry2D;
use crate::fields::grid::FieldGrid;
use crate::fields::{ground_coefficient, Level};
use crate::units::{ghz, nm, um, uw};

/// Guided-mode polarization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarization {
    /// Electric field mainly in the plane of the device (bright in the gap).
    TE,
    /// Electric field mainly normal to the device plane.
    TM,
}

/// Which D line the mode's detuning is quoted against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RefLine {
    D1,
    D2,
}

/// Transverse profile inside the vacuum gap, see module docs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GapStyle {
    Plateau,
    TwoWall,
    /// `TwoWall` multiplied by a Gaussian envelope exp(-2 z^2 / z_waist^2)
    /// normal to the device plane, the localization a guided gap mode has
    /// around z = 0. Needed when the z structure matters (trapping).
    Confined { z_waist: f64 },
}

/// One guided-mode beam.
#[derive(Debug, Clone)]
pub struct GmMode {
    pub polarization: Polarization,
    /// Internal (circulating) power (W).
    pub power: f64,
    /// Effective mode area converting power to peak intensity (m^2).
    pub mode_area: f64,
    /// Detuning from `reference` (rad/s; positive = blue).
    pub detuning: f64,
    pub reference: RefLine,
    /// Evanescent intensity decay length 1/kappa (m); intensity falls as
    /// exp(-2 * kappa * d) with distance d from the structure.
    pub kappa_inv: f64,
    /// Axial intensity contrast in [0, 1] (1 = full Bloch modulation).
    pub axial_contrast: f64,
    pub gap_style: GapStyle,
    /// Optional imported relative-intensity profile (dimensionless, peak 1).
    pub profile_grid: Option<FieldGrid>,
    /// Hyperfine depth scaling applied to F3 ground-state atoms.
    pub scale_f3: f64,
    /// Hyperfine depth scaling applied to F4 ground-state atoms.
    pub scale_f4: f64,
}

impl Default for GmMode {
    fn default() -> Self {
        GmMode {
            polarization: Polarization::TM,
            power: uw(10.0),
            mode_area: um(1.0) * um(0.3),
            detuning: ghz(58.0),
            reference: RefLine::D2,
            kappa_inv: nm(150.0),
            axial_contrast: 0.0,
            gap_style: GapStyle::Plateau,
            profile_grid: None,
            scale_f3: 1.0,
            scale_f4: 1.0,
        }
    }
}

impl GmMode {
    /// Laser detuning from the D2 line (rad/s).
    pub fn detuning_d2(&self) -> f64 {
        match self.reference {
            RefLine::D2 => self.detuning,
            RefLine::D1 => self.detuning - CS_FINE_SPLITTING,
        }
    }

    /// Peak intensity (W/m^2).
    pub fn peak_intensity(&self) -> f64 {
        self.power / self.mode_area
    }

    fn two_wall_rel(&self, pos: Vector2<f64>, geom: &Geometry2D) -> f64 {
        let kappa = 1.0 / self.kappa_inv;
        let f: f64 = (0..2)
            .map(|b| (-2.0 * kappa * geom.beam_distance(pos, b).max(0.0)).exp())
            .sum();
        f / (1.0 + (-2.0 * kappa * geom.gap).exp())
    }

    /// Relative transverse intensity profile in [0, 1].
    pub fn profile_rel(&self, pos: Vector2<f64>, geom: &Geometry2D) -> Result<f64, FieldError> {
        if let Some(grid) = &self.profile_grid {
            return grid.sample(pos);
        }
        let kappa = 1.0 / self.kappa_inv;
        Ok(match self.gap_style {
            GapStyle::Plateau => {
                let d = geom.hull_distance(pos).max(0.0);
                (-2.0 * kappa * d).exp()
            }
            GapStyle::TwoWall => self.two_wall_rel(pos, geom),
            GapStyle::Confined { z_waist } => {
                let z = pos[1];
                self.two_wall_rel(pos, geom) * (-2.0 * z * z / (z_waist * z_waist)).exp()
            }
        })
    }

    /// Gradient of [`GmMode::profile_rel`].
    pub fn profile_grad(
        &self,
        pos: Vector2<f64>,
        geom: &Geometry2D,
    ) -> Result<Vector2<f64>, FieldError> {
        if let Some(grid) = &self.profile_grid {
            return grid.grad(pos);
        }
        let kappa = 1.0 / self.kappa_inv;
        Ok(match self.gap_style {
            GapStyle::Plateau => {
                let d = geom.hull_distance(pos);
                if d > 0.0 {
                    geom.hull_distance_grad(pos) * (-2.0 * kappa) * (-2.0 * kappa * d).exp()
                } else {
                    Vector2::zeros()
                }
            }
            GapStyle::TwoWall => self.two_wall_grad(pos, geom),
            GapStyle::Confined { z_waist } => {
                let z = pos[1];
                let env = (-2.0 * z * z / (z_waist * z_waist)).exp();
                let mut g = self.two_wall_grad(pos, geom) * env;
                g[1] += self.two_wall_rel(pos, geom) * env * (-4.0 * z / (z_waist * z_waist));
                g
            }
        })
    }

    fn two_wall_grad(&self, pos: Vector2<f64>, geom: &Geometry2D) -> Vector2<f64> {
        let kappa = 1.0 / self.kappa_inv;
        let norm = 1.0 + (-2.0 * kappa * geom.gap).exp();
        let mut g = Vector2::zeros();
        for b in 0..2 {
            let d = geom.beam_distance(pos, b);
            if d > 0.0 {
                g += geom.beam_distance_grad(pos, b) * (-2.0 * kappa) * (-2.0 * kappa * d).exp();
            }
        }
        g / norm
    }

    /// Relative axial intensity factor at position x along the waveguide.
    pub fn axial_rel(&self, x: f64, unit_cell: f64) -> f64 {
        let c = self.axial_contrast;
        (1.0 - c) + c * (2.0 * PI * x / unit_cell).cos().powi(2)
    }
}

/// A guided mode with its dipole coefficient resolved.
#[derive(Debug, Clone)]
pub struct GmField {
    pub mode: GmMode,
    /// Ground-state dipole coefficient (J per W/m^2) at the mode detuning.
    coef: f64,
}

impl GmField {
    pub fn new(mode: GmMode, transitions: &Transitions) -> Result<Self, FieldError> {
        let coef = ground_coefficient(mode.detuning_d2(), transitions)?;
        Ok(GmField { mode, coef })
    }

    fn level_scale(&self, level: Level, transitions: &Transitions) -> f64 {
        match level {
            Level::F3 => self.mode.scale_f3,
            Level::F4 => self.mode.scale_f4,
            Level::Excited => transitions.excited_shift_ratio,
        }
    }

    /// Local intensity (W/m^2).
    pub fn intensity(&self, pos: Vector2<f64>, geom: &Geometry2D) -> Result<f64, FieldError> {
        Ok(self.mode.peak_intensity() * self.mode.profile_rel(pos, geom)?)
    }

    /// Dipole potential (J) for the given level.
    pub fn potential(
        &self,
        pos: Vector2<f64>,
        geom: &Geometry2D,
        level: Level,
        transitions: &Transitions,
    ) -> Result<f64, FieldError> {
        Ok(self.level_scale(level, transitions) * self.coef * self.intensity(pos, geom)?)
    }

    /// Analytic gradient of [`GmField::potential`] (J/m).
    pub fn potential_grad(
        &self,
        pos: Vector2<f64>,
        geom: &Geometry2D,
        level: Level,
        transitions: &Transitions,
    ) -> Result<Vector2<f64>, FieldError> {
        Ok(self.mode.profile_grad(pos, geom)?
            * (self.level_scale(level, transitions) * self.coef * self.mode.peak_intensity()))
    }

    /// Sign of the potential: blue-detuned modes are repulsive for the ground
    /// state (positive coefficient), red-detuned attractive.
    pub fn is_repulsive(&self) -> bool {
        self.coef > 0.0
    }
}
