//! Transfer-matrix optics for a chain of atoms coupled to one waveguide mode.
//!
//! Each atom is a point scatterer with reflection `r = -G/(G + G' - 2i*delta)`
//! (G the guided decay rate, G' all other decay, delta the detuning seen by
//! the atom) and transmission `t = 1 + r`; waveguide stretches between atoms
//! advance the field phase. Transmission and reflection of the full chain
//! come from the ordered matrix product.

use num_complex::Complex64;

use crate::error::MatrixError;

/// 2x2 complex transfer matrix relating field amplitudes on the two sides
/// of an element. Determinant is 1 for every physical element here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub m11: Complex64,
    pub m12: Complex64,
    pub m21: Complex64,
    pub m22: Complex64,
}

impl TransferMatrix {
    pub fn identity() -> Self {
        TransferMatrix {
            m11: Complex64::new(1.0, 0.0),
            m12: Complex64::new(0.0, 0.0),
            m21: Complex64::new(0.0, 0.0),
            m22: Complex64::new(1.0, 0.0),
        }
    }

    /// Matrix product `self * rhs` (apply `rhs` first).
    pub fn mul(&self, rhs: &TransferMatrix) -> TransferMatrix {
        TransferMatrix {
            m11: self.m11 * rhs.m11 + self.m12 * rhs.m21,
            m12: self.m11 * rhs.m12 + self.m12 * rhs.m22,
            m21: self.m21 * rhs.m11 + self.m22 * rhs.m21,
            m22: self.m21 * rhs.m12 + self.m22 * rhs.m22,
        }
    }

    pub fn det(&self) -> Complex64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }
}

/// One atom as the probe sees it: axial position, guided coupling, and the
/// local line shift (rad/s) its environment imposes.
#[derive(Debug, Clone, Copy)]
pub struct AtomSnapshot {
    /// Axial position along the waveguide (m), from the input facet.
    pub x: f64,
    /// Guided-mode decay rate at the atom's position (rad/s).
    pub gamma_1d: f64,
    /// Line shift (rad/s); the atom responds to `delta_p - shift`.
    pub shift: f64,
}

/// Reflection coefficient of a single atom at detuning `delta`.
pub fn atom_reflection(delta: f64, gamma_1d: f64, gamma_prime: f64) -> Complex64 {
    -Complex64::new(gamma_1d, 0.0) / Complex64::new(gamma_1d + gamma_prime, -2.0 * delta)
}

/// Transfer matrix of one atom. The uncoupled atom is the identity; the
/// lossless resonant atom (`gamma_prime = 0`, `delta = 0`) is a perfect
/// reflector whose transfer matrix does not exist.
pub fn atom_matrix(
    delta: f64,
    gamma_1d: f64,
    gamma_prime: f64,
) -> Result<TransferMatrix, MatrixError> {
    if gamma_1d == 0.0 {
        return Ok(TransferMatrix::identity());
    }
    let r = atom_reflection(delta, gamma_1d, gamma_prime);
    let t = Complex64::new(1.0, 0.0) + r;
    if t.norm() < 1e-30 {
        return Err(MatrixError::SingularAtom);
    }
    Ok(TransferMatrix {
        m11: t - r * r / t,
        m12: r / t,
        m21: -r / t,
        m22: Complex64::new(1.0, 0.0) / t,
    })
}

/// Transfer matrix of a bare waveguide stretch of length `l` at wavenumber
/// `k`: diag(e^{ikl}, e^{-ikl}).
pub fn segment_matrix(k: f64, l: f64) -> TransferMatrix {
    let ph = Complex64::from_polar(1.0, k * l);
    TransferMatrix {
        m11: ph,
        m12: Complex64::new(0.0, 0.0),
        m21: Complex64::new(0.0, 0.0),
        m22: ph.conj(),
    }
}

/// Ordered product over the chain at probe detuning `delta_p`. Snapshots
/// must be sorted by x (non-negative, non-decreasing); segment `i` spans
/// from the previous atom (or the input facet) to atom `i`. The stretch
/// after the last atom only adds a global phase and is omitted.
pub fn total_matrix(
    snapshots: &[AtomSnapshot],
    delta_p: f64,
    k: f64,
    gamma_prime: f64,
) -> Result<TransferMatrix, MatrixError> {
    let mut m = TransferMatrix::identity();
    let mut x_prev = 0.0;
    for s in snapshots {
        if s.x < x_prev {
            return Err(MatrixError::UnsortedPositions);
        }
        let seg = segment_matrix(k, s.x - x_prev);
        let atom = atom_matrix(delta_p - s.shift, s.gamma_1d, gamma_prime)?;
        m = atom.mul(&seg.mul(&m));
        x_prev = s.x;
    }
    Ok(m)
}

/// Power transmission and reflection of a chain from its total matrix.
pub fn transmission(m: &TransferMatrix) -> Result<(f64, f64), MatrixError> {
    if m.m22.norm() < 1e-30 {
        return Err(MatrixError::SingularTotal);
    }
    let t = (Complex64::new(1.0, 0.0) / m.m22).norm_sqr();
    let r = (m.m21 / m.m22).norm_sqr();
    Ok((t, r))
}
