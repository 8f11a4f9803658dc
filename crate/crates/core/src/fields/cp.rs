//! Casimir-Polder surface attraction.
//!
//! Modeled as U = -C3 / d^3 with d the distance to the nearest dielectric
//! surface. C3 is level-dependent (ground vs excited); hyperfine structure
//! does not split it. There is no reliable in-repo default for C3 against
//! this device's dielectric, so the run configuration must supply it.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::fields::geometry::Geometry2D;
use crate::fields::Level;

/// Casimir-Polder coefficients (J m^3, >= 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpParams {
    pub c3_ground: f64,
    pub c3_excited: f64,
}

impl CpParams {
    pub fn c3(&self, level: Level) -> f64 {
        match level {
            Level::F3 | Level::F4 => self.c3_ground,
            Level::Excited => self.c3_excited,
        }
    }

    /// Potential at a given surface distance d > 0 (J).
    pub fn potential_at_distance(&self, d: f64, level: Level) -> f64 {
        -self.c3(level) / (d * d * d)
    }

    /// Potential at a position; errors inside the dielectric.
    pub fn potential(
        &self,
        pos: Vector2<f64>,
        geom: &Geometry2D,
        level: Level,
    ) -> Result<f64, FieldError> {
        let d = geom.distance(pos);
        if d <= 0.0 {
            return Err(FieldError::InsideDielectric {
                y: pos[0],
                z: pos[1],
            });
        }
        Ok(self.potential_at_distance(d, level))
    }

    /// Potential with the distance clamped to `d_floor`; finite everywhere.
    /// Used for integrator stage evaluations that may graze the surface.
    pub fn potential_soft(
        &self,
        pos: Vector2<f64>,
        geom: &Geometry2D,
        level: Level,
        d_floor: f64,
    ) -> f64 {
        let d = geom.distance(pos).max(d_floor);
        self.potential_at_distance(d, level)
    }

    /// Analytic gradient of the potential (J/m).
    pub fn potential_grad(
        &self,
        pos: Vector2<f64>,
        geom: &Geometry2D,
        level: Level,
    ) -> Result<Vector2<f64>, FieldError> {
        let d = geom.distance(pos);
        if d <= 0.0 {
            return Err(FieldError::InsideDielectric {
                y: pos[0],
                z: pos[1],
            });
        }
        Ok(geom.distance_grad(pos) * (3.0 * self.c3(level) / (d * d * d * d)))
    }

    /// Clamped-gradient counterpart of [`CpParams::potential_soft`].
    pub fn potential_grad_soft(
        &self,
        pos: Vector2<f64>,
        geom: &Geometry2D,
        level: Level,
        d_floor: f64,
    ) -> Vector2<f64> {
        let d = geom.distance(pos).max(d_floor);
        geom.distance_grad(pos) * (3.0 * self.c3(level) / (d * d * d * d))
    }
}
