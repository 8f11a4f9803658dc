//! Imported static field grids.
//!
//! Plain-text format, one header line then whitespace-separated values:
//!
//! ```text
//! nx ny dy_nm dz_nm origin_y_nm origin_z_nm
//! v(0,0) v(0,1) ... v(0,ny-1)
//! v(1,0) ...
//! ```
//!
//! `nx` counts samples along y (spacing `dy_nm`), `ny` counts samples along z
//! (spacing `dz_nm`); values are row-major with z running fastest, so sample
//! `(iy, iz)` sits at index `iy * ny + iz` and position
//! `(origin_y + iy*dy, origin_z + iz*dz)`. Values must be finite and
//! non-negative. Blank lines and `#` comments are ignored.

use nalgebra::Vector2;

use crate::error::{FieldError, GridParseError};
use crate::units::nm;

/// A rectilinear scalar field on the (y, z) plane, sampled bilinearly.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    n_y: usize,
    n_z: usize,
    dy: f64,
    dz: f64,
    origin_y: f64,
    origin_z: f64,
    values: Vec<f64>,
}

impl FieldGrid {
    /// Build a grid directly from SI spacings/origin and row-major values
    /// (z fastest). Mostly useful for tests and for programmatic grids.
    pub fn from_values(
        n_y: usize,
        n_z: usize,
        dy: f64,
        dz: f64,
        origin_y: f64,
        origin_z: f64,
        values: Vec<f64>,
    ) -> Result<Self, GridParseError> {
        if n_y == 0 || n_z == 0 {
            return Err(GridParseError::Header("zero sample count".into()));
        }
        if !(dy > 0.0) || !(dz > 0.0) {
            return Err(GridParseError::Header("non-positive spacing".into()));
        }
        if values.len() != n_y * n_z {
            return Err(GridParseError::Count {
                expected: n_y * n_z,
                found: values.len(),
            });
        }
        for (index, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(GridParseError::BadValue {
                    index,
                    what: "not finite".into(),
                });
            }
            if *v < 0.0 {
                return Err(GridParseError::BadValue {
                    index,
                    what: format!("negative ({v})"),
                });
            }
        }
        Ok(FieldGrid {
            n_y,
            n_z,
            dy,
            dz,
            origin_y,
            origin_z,
            values,
        })
    }

    /// Parse the plain-text grid format described at module level.
    pub fn parse(text: &str) -> Result<Self, GridParseError> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| GridParseError::Header("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(GridParseError::Header(format!(
                "expected 6 fields (nx ny dy_nm dz_nm origin_y_nm origin_z_nm), found {}",
                fields.len()
            )));
        }
        let n_y: usize = fields[0]
            .parse()
            .map_err(|_| GridParseError::Header(format!("bad nx '{}'", fields[0])))?;
        let n_z: usize = fields[1]
            .parse()
            .map_err(|_| GridParseError::Header(format!("bad ny '{}'", fields[1])))?;
        let mut geom = [0.0f64; 4];
        for (i, g) in geom.iter_mut().enumerate() {
            *g = fields[i + 2].parse().map_err(|_| {
                GridParseError::Header(format!("bad header number '{}'", fields[i + 2]))
            })?;
        }
        let mut values = Vec::with_capacity(n_y * n_z);
        for (index, tok) in lines.flat_map(str::split_whitespace).enumerate() {
            let v: f64 = tok.parse().map_err(|_| GridParseError::BadValue {
                index,
                what: format!("unparsable ('{tok}')"),
            })?;
            values.push(v);
        }
        Self::from_values(n_y, n_z, nm(geom[0]), nm(geom[1]), nm(geom[2]), nm(geom[3]), values)
    }

    /// Read a grid file from disk.
    pub fn load(path: &std::path::Path) -> Result<Self, GridParseError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serialize back to the plain-text format (values in file units).
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {} {} {}\n",
            self.n_y,
            self.n_z,
            self.dy * 1e9,
            self.dz * 1e9,
            self.origin_y * 1e9,
            self.origin_z * 1e9
        );
        for iy in 0..self.n_y {
            let row: Vec<String> = (0..self.n_z)
                .map(|iz| format!("{}", self.values[iy * self.n_z + iz]))
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Coverage extents: ((y_min, y_max), (z_min, z_max)).
    pub fn extents(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.origin_y, self.origin_y + self.dy * (self.n_y - 1) as f64),
            (self.origin_z, self.origin_z + self.dz * (self.n_z - 1) as f64),
        )
    }

    /// True when the whole rectangle [y0, y1] x [z0, z1] is covered.
    pub fn covers(&self, y0: f64, y1: f64, z0: f64, z1: f64) -> bool {
        let ((gy0, gy1), (gz0, gz1)) = self.extents();
        gy0 <= y0 && y1 <= gy1 && gz0 <= z0 && z1 <= gz1
    }

    /// True when a single point is covered.
    pub fn contains(&self, pos: Vector2<f64>) -> bool {
        self.covers(pos[0], pos[0], pos[1], pos[1])
    }

    fn cell(&self, pos: Vector2<f64>) -> Result<(usize, usize, f64, f64), FieldError> {
        if !self.contains(pos) {
            return Err(FieldError::OutsideGrid {
                y: pos[0],
                z: pos[1],
            });
        }
        let fy = (pos[0] - self.origin_y) / self.dy;
        let fz = (pos[1] - self.origin_z) / self.dz;
        let iy = (fy.floor() as usize).min(self.n_y.saturating_sub(2));
        let iz = (fz.floor() as usize).min(self.n_z.saturating_sub(2));
        Ok((iy, iz, fy - iy as f64, fz - iz as f64))
    }

    fn corner(&self, iy: usize, iz: usize) -> f64 {
        self.values[iy * self.n_z + iz]
    }

    /// Bilinear sample. Errors outside the covered rectangle.
    pub fn sample(&self, pos: Vector2<f64>) -> Result<f64, FieldError> {
        if self.n_y == 1 && self.n_z == 1 {
            return if self.contains(pos) {
                Ok(self.values[0])
            } else {
                Err(FieldError::OutsideGrid {
                    y: pos[0],
                    z: pos[1],
                })
            };
        }
        let (iy, iz, u, v) = self.cell(pos)?;
        let (iy1, iz1) = ((iy + 1).min(self.n_y - 1), (iz + 1).min(self.n_z - 1));
        Ok(self.corner(iy, iz) * (1.0 - u) * (1.0 - v)
            + self.corner(iy1, iz) * u * (1.0 - v)
            + self.corner(iy, iz1) * (1.0 - u) * v
            + self.corner(iy1, iz1) * u * v)
    }

    /// Gradient of the bilinear interpolant (piecewise per cell).
    pub fn grad(&self, pos: Vector2<f64>) -> Result<Vector2<f64>, FieldError> {
        if self.n_y == 1 && self.n_z == 1 {
            self.sample(pos)?;
            return Ok(Vector2::zeros());
        }
        let (iy, iz, u, v) = self.cell(pos)?;
        let (iy1, iz1) = ((iy + 1).min(self.n_y - 1), (iz + 1).min(self.n_z - 1));
        let (f00, f10, f01, f11) = (
            self.corner(iy, iz),
            self.corner(iy1, iz),
            self.corner(iy, iz1),
            self.corner(iy1, iz1),
        );
        let dfdy = ((f10 - f00) * (1.0 - v) + (f11 - f01) * v) / self.dy;
        let dfdz = ((f01 - f00) * (1.0 - u) + (f11 - f10) * u) / self.dz;
        Ok(Vector2::new(dfdy, dfdz))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_grid() -> FieldGrid {
        // f(y, z) = 2 + y/nm + 3*z/nm on a 3x4 grid, 10 nm spacing.
        let mut values = Vec::new();
        for iy in 0..3 {
            for iz in 0..4 {
                values.push(2.0 + 10.0 * iy as f64 + 30.0 * iz as f64);
            }
        }
        FieldGrid::from_values(3, 4, nm(10.0), nm(10.0), 0.0, 0.0, values).unwrap()
    }

    #[test]
    fn constant_grid_everywhere_constant() {
        let g = FieldGrid::from_values(2, 2, nm(5.0), nm(5.0), 0.0, 0.0, vec![7.0; 4]).unwrap();
        for (y, z) in [(0.0, 0.0), (2.5, 2.5), (5.0, 0.1), (1.0, 4.9)] {
            let v = g.sample(Vector2::new(nm(y), nm(z))).unwrap();
            assert!((v - 7.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn node_sample_is_exact() {
        let g = ramp_grid();
        let v = g.sample(Vector2::new(nm(20.0), nm(30.0))).unwrap();
        assert!((v - (2.0 + 20.0 + 90.0)).abs() < 1e-10, "{v}");
    }

    #[test]
    fn bilinear_reproduces_linear_ramp() {
        let g = ramp_grid();
        for (y, z) in [(3.7, 12.9), (15.55, 0.3), (19.99, 29.9)] {
            let v = g.sample(Vector2::new(nm(y), nm(z))).unwrap();
            let truth = 2.0 + y + 3.0 * z;
            assert!((v - truth).abs() < 1e-12 * truth.abs().max(1.0), "{v} vs {truth}");
        }
    }

    #[test]
    fn grad_matches_ramp_slopes() {
        let g = ramp_grid();
        let grad = g.grad(Vector2::new(nm(7.0), nm(22.0))).unwrap();
        assert!((grad[0] - 1.0 / nm(1.0)).abs() < 1e-3 / nm(1.0));
        assert!((grad[1] - 3.0 / nm(1.0)).abs() < 1e-3 / nm(1.0));
    }

    #[test]
    fn outside_errors() {
        let g = ramp_grid();
        let err = g.sample(Vector2::new(nm(-1.0), 0.0)).unwrap_err();
        assert!(matches!(err, FieldError::OutsideGrid { .. }));
        assert!(g.sample(Vector2::new(0.0, nm(30.1))).is_err());
    }

    #[test]
    fn parse_round_trip() {
        let g = ramp_grid();
        let text = g.to_text();
        let g2 = FieldGrid::parse(&text).unwrap();
        assert_eq!(g, g2);
    }

    #[test]
    fn parse_accepts_comments_and_blanks() {
        let text = "# comment\n\n2 2 10 10 0 0\n1 2\n3 4\n";
        let g = FieldGrid::parse(text).unwrap();
        assert_eq!(g.sample(Vector2::zeros()).unwrap(), 1.0);
    }

    #[test]
    fn malformed_header_rejected() {
        for text in [
            "",
            "2 2 10 10 0\n1 2 3 4",
            "x 2 10 10 0 0\n1 2 3 4",
            "2 2 10 ten 0 0\n1 2 3 4",
            "2 2 0 10 0 0\n1 2 3 4",
        ] {
            let err = FieldGrid::parse(text).unwrap_err();
            assert!(matches!(err, GridParseError::Header(_)), "{text:?} -> {err}");
        }
    }

    #[test]
    fn wrong_count_rejected() {
        let err = FieldGrid::parse("2 2 10 10 0 0\n1 2 3\n").unwrap_err();
        assert!(matches!(err, GridParseError::Count { expected: 4, found: 3 }));
        let err = FieldGrid::parse("2 2 10 10 0 0\n1 2 3 4 5\n").unwrap_err();
        assert!(matches!(err, GridParseError::Count { expected: 4, found: 5 }));
    }

    #[test]
    fn non_finite_and_negative_rejected() {
        let err = FieldGrid::parse("2 2 10 10 0 0\n1 2 nan 4\n").unwrap_err();
        assert!(matches!(err, GridParseError::BadValue { index: 2, .. }));
        let err = FieldGrid::parse("2 2 10 10 0 0\n1 2 -3 4\n").unwrap_err();
        assert!(matches!(err, GridParseError::BadValue { index: 2, .. }));
        let err = FieldGrid::parse("2 2 10 10 0 0\n1 2 inf 4\n").unwrap_err();
        assert!(matches!(err, GridParseError::BadValue { index: 2, .. }));
    }
}
