//! Device cross-section geometry on the transverse (y, z) plane.
//!
//! The waveguide runs along x; the simulation plane cuts through the thick
//! part of the structure, where the cross section is two parallel dielectric
//! beams separated by a vacuum gap. Positions are `Vector2<f64>` with the
//! convention `pos[0] = y` (across the gap) and `pos[1] = z` (along the
//! delivery direction); the device is centered on the origin.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::units::nm;

/// Cross-section geometry of the two-beam device plus the axial cell data
/// that the probe optics need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry2D {
    /// Vacuum gap between the inner beam faces along y (m).
    pub gap: f64,
    /// Width of each dielectric beam along y (m).
    pub beam_width: f64,
    /// Device layer thickness along z (m).
    pub thickness: f64,
    /// Lattice constant along the waveguide axis x (m).
    pub unit_cell: f64,
    /// Number of unit cells in the patterned section.
    pub length_cells: usize,
}

impl Default for Geometry2D {
    fn default() -> Self {
        Geometry2D {
            gap: nm(250.0),
            beam_width: nm(300.0),
            thickness: nm(200.0),
            unit_cell: nm(370.0),
            length_cells: 150,
        }
    }
}

/// Signed distance to an axis-aligned rectangle: negative inside, zero on the
/// boundary, Euclidean distance outside.
fn rect_sdf(p: Vector2<f64>, center: Vector2<f64>, half: Vector2<f64>) -> f64 {
    let qy = (p[0] - center[0]).abs() - half[0];
    let qz = (p[1] - center[1]).abs() - half[1];
    let outside = (qy.max(0.0).powi(2) + qz.max(0.0).powi(2)).sqrt();
    let inside = qy.max(qz).min(0.0);
    outside + inside
}

/// Gradient of [`rect_sdf`]; unit length except exactly on the medial axis.
fn rect_sdf_grad(p: Vector2<f64>, center: Vector2<f64>, half: Vector2<f64>) -> Vector2<f64> {
    let py = p[0] - center[0];
    let pz = p[1] - center[1];
    let qy = py.abs() - half[0];
    let qz = pz.abs() - half[1];
    if qy > 0.0 && qz > 0.0 {
        let n = (qy * qy + qz * qz).sqrt();
        Vector2::new(qy * py.signum() / n, qz * pz.signum() / n)
    } else if qy > qz {
        Vector2::new(py.signum(), 0.0)
    } else {
        Vector2::new(0.0, pz.signum())
    }
}

impl Geometry2D {
    /// Centers and half-extents of the two beams, upper (+y) first.
    fn beams(&self) -> [(Vector2<f64>, Vector2<f64>); 2] {
        let cy = self.gap / 2.0 + self.beam_width / 2.0;
        let half = Vector2::new(self.beam_width / 2.0, self.thickness / 2.0);
        [
            (Vector2::new(cy, 0.0), half),
            (Vector2::new(-cy, 0.0), half),
        ]
    }

    /// Signed distance to the nearest dielectric surface (negative inside).
    pub fn distance(&self, pos: Vector2<f64>) -> f64 {
        let [(c0, h0), (c1, h1)] = self.beams();
        rect_sdf(pos, c0, h0).min(rect_sdf(pos, c1, h1))
    }

    /// Signed distance to one beam individually (0 = upper/+y, 1 = lower/-y).
    pub fn beam_distance(&self, pos: Vector2<f64>, beam: usize) -> f64 {
        let (c, h) = self.beams()[beam];
        rect_sdf(pos, c, h)
    }

    /// Gradient of [`Geometry2D::distance`], taken from the nearest beam.
    /// Discontinuous only on the measure-zero midplane between the beams.
    pub fn distance_grad(&self, pos: Vector2<f64>) -> Vector2<f64> {
        let [(c0, h0), (c1, h1)] = self.beams();
        if rect_sdf(pos, c0, h0) <= rect_sdf(pos, c1, h1) {
            rect_sdf_grad(pos, c0, h0)
        } else {
            rect_sdf_grad(pos, c1, h1)
        }
    }

    /// Gradient of [`Geometry2D::beam_distance`].
    pub fn beam_distance_grad(&self, pos: Vector2<f64>, beam: usize) -> Vector2<f64> {
        let (c, h) = self.beams()[beam];
        rect_sdf_grad(pos, c, h)
    }

    /// Distance to the convex hull of the cross section (both beams plus the
    /// gap treated as one solid slab). Zero inside the hull, which includes
    /// the whole gap.
    pub fn hull_distance(&self, pos: Vector2<f64>) -> f64 {
        let half = Vector2::new(
            self.gap / 2.0 + self.beam_width,
            self.thickness / 2.0,
        );
        rect_sdf(pos, Vector2::zeros(), half).max(0.0)
    }

    /// Gradient of [`Geometry2D::hull_distance`]; zero inside the hull.
    pub fn hull_distance_grad(&self, pos: Vector2<f64>) -> Vector2<f64> {
        let half = Vector2::new(
            self.gap / 2.0 + self.beam_width,
            self.thickness / 2.0,
        );
        if rect_sdf(pos, Vector2::zeros(), half) <= 0.0 {
            Vector2::zeros()
        } else {
            rect_sdf_grad(pos, Vector2::zeros(), half)
        }
    }

    /// True when the point sits inside (or on the surface of) the dielectric.
    pub fn in_dielectric(&self, pos: Vector2<f64>) -> bool {
        self.distance(pos) <= 0.0
    }

    /// True when the point is in the vacuum gap region between the beams.
    pub fn in_gap(&self, pos: Vector2<f64>) -> bool {
        pos[0].abs() < self.gap / 2.0 && pos[1].abs() <= self.thickness / 2.0
    }

    /// |y| of the outer beam faces.
    pub fn beam_outer_edge(&self) -> f64 {
        self.gap / 2.0 + self.beam_width
    }

    /// Patterned-section length along x (m).
    pub fn length(&self) -> f64 {
        self.unit_cell * self.length_cells as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::nm;

    fn geom() -> Geometry2D {
        Geometry2D::default()
    }

    #[test]
    fn default_dimensions() {
        let g = geom();
        assert!((g.gap - 250e-9).abs() < 1e-18);
        assert!((g.beam_width - 300e-9).abs() < 1e-18);
        assert!((g.thickness - 200e-9).abs() < 1e-18);
        assert!((g.length() - 55.5e-6).abs() < 1e-12);
    }

    #[test]
    fn gap_center_distance_is_half_gap() {
        let g = geom();
        let d = g.distance(Vector2::new(0.0, 0.0));
        assert!((d - g.gap / 2.0).abs() < 1e-18, "d = {d}");
    }

    #[test]
    fn inside_beam_is_negative() {
        let g = geom();
        let p = Vector2::new(g.gap / 2.0 + g.beam_width / 2.0, 0.0);
        assert!(g.distance(p) < 0.0);
        assert!(g.in_dielectric(p));
    }

    #[test]
    fn distance_above_top_face_is_vertical() {
        let g = geom();
        let p = Vector2::new(g.gap / 2.0 + g.beam_width / 2.0, g.thickness / 2.0 + nm(50.0));
        assert!((g.distance(p) - nm(50.0)).abs() < 1e-18);
        let grad = g.distance_grad(p);
        assert!((grad[0] - 0.0).abs() < 1e-15);
        assert!((grad[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn corner_distance_is_euclidean() {
        let g = geom();
        // 30 nm out along y and 40 nm along z from the inner top corner.
        let p = Vector2::new(g.gap / 2.0 - nm(30.0), g.thickness / 2.0 + nm(40.0));
        assert!((g.distance(p) - nm(50.0)).abs() < 1e-18);
    }

    #[test]
    fn sdf_is_one_lipschitz() {
        let g = geom();
        let mut rng = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..500 {
            let a = Vector2::new((next() - 0.5) * 2e-6, (next() - 0.5) * 2e-6);
            let b = Vector2::new((next() - 0.5) * 2e-6, (next() - 0.5) * 2e-6);
            let lhs = (g.distance(a) - g.distance(b)).abs();
            assert!(lhs <= (a - b).norm() + 1e-15);
        }
    }

    #[test]
    fn hull_distance_zero_in_gap() {
        let g = geom();
        assert_eq!(g.hull_distance(Vector2::new(0.0, 0.0)), 0.0);
        assert_eq!(g.hull_distance_grad(Vector2::new(0.0, 0.0)), Vector2::zeros());
        assert!(g.hull_distance(Vector2::new(0.0, g.thickness)) > 0.0);
        // Above the slab the hull distance is the plain vertical distance.
        let p = Vector2::new(0.0, g.thickness / 2.0 + nm(80.0));
        assert!((g.hull_distance(p) - nm(80.0)).abs() < 1e-18);
    }

    #[test]
    fn grad_matches_finite_differences_away_from_kinks() {
        let g = geom();
        let pts = [
            Vector2::new(nm(60.0), nm(150.0)),
            Vector2::new(-nm(700.0), -nm(80.0)),
            Vector2::new(nm(500.0), nm(400.0)),
        ];
        let h = 1e-12;
        for p in pts {
            let grad = g.distance_grad(p);
            for axis in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[axis] += h;
                pm[axis] -= h;
                let fd = (g.distance(pp) - g.distance(pm)) / (2.0 * h);
                assert!((grad[axis] - fd).abs() < 1e-3, "axis {axis} at {p:?}");
            }
        }
    }
}
