//! Shared helpers for the acceptance suite: an independent multiple-
//! scattering solver, a scalar minimizer, and readers for run artifacts.

use apcw_core::optics::matrix::{atom_reflection, AtomSnapshot};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Power transmission and reflection of an atom chain, solved directly as a
/// linear system in the forward/backward field amplitudes instead of a
/// transfer-matrix product.
///
/// Unknowns are, per atom `i`, the right-moving amplitude `a_i` just left of
/// the atom and the left-moving amplitude `d_i` just right of it. Each atom
/// is a beamsplitter with `r` from [`atom_reflection`] and `t = 1 + r`;
/// stretches between atoms advance the phase by `k * dx`:
///
///   a_{i+1} = e^{ik dx} (t_i a_i + r_i d_i)
///   d_i     = e^{ik dx} (r_{i+1} a_{i+1} + t_{i+1} d_{i+1})
///
/// with unit input (`a_1 = e^{ik x_1}`) and nothing incident from the right
/// (`d_n = 0`).
pub fn direct_scattering(
    snapshots: &[AtomSnapshot],
    delta_p: f64,
    k: f64,
    gamma_prime: f64,
) -> (f64, f64) {
    let n = snapshots.len();
    if n == 0 {
        return (1.0, 0.0);
    }
    let r: Vec<Complex64> = snapshots
        .iter()
        .map(|s| atom_reflection(delta_p - s.shift, s.gamma_1d, gamma_prime))
        .collect();
    let t: Vec<Complex64> = r.iter().map(|r| Complex64::new(1.0, 0.0) + r).collect();
    let phase = |dx: f64| Complex64::from_polar(1.0, k * dx);

    // Unknown layout: [a_1 .. a_n, d_1 .. d_n].
    let dim = 2 * n;
    let mut m = DMatrix::<Complex64>::zeros(dim, dim);
    let mut rhs = DVector::<Complex64>::zeros(dim);
    let one = Complex64::new(1.0, 0.0);

    m[(0, 0)] = one;
    rhs[0] = phase(snapshots[0].x);
    for i in 0..n - 1 {
        let ph = phase(snapshots[i + 1].x - snapshots[i].x);
        // a_{i+1} - ph (t_i a_i + r_i d_i) = 0
        let row = 1 + i;
        m[(row, i + 1)] = one;
        m[(row, i)] = -ph * t[i];
        m[(row, n + i)] = -ph * r[i];
        // d_i - ph (r_{i+1} a_{i+1} + t_{i+1} d_{i+1}) = 0
        let row = n + i;
        m[(row, n + i)] = one;
        m[(row, i + 1)] = -ph * r[i + 1];
        m[(row, n + i + 1)] = -ph * t[i + 1];
    }
    m[(dim - 1, dim - 1)] = one;

    let sol = m.lu().solve(&rhs).expect("scattering system is regular");
    let a1 = sol[0];
    let an = sol[n - 1];
    let d1 = sol[n];
    let transmitted = t[n - 1] * an;
    let reflected = r[0] * a1 + t[0] * d1;
    (transmitted.norm_sqr(), reflected.norm_sqr())
}

/// Golden-section minimizer of a unimodal scalar function on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Sum of (1 - T) over detunings per time bin, read back from a clocked
/// spectrum CSV (rows are time bins, columns are detuning channels, `nan`
/// marks empty cells).
pub fn read_projection(path: &std::path::Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).expect("clocked spectrum artifact");
    let mut proj = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let mut od = 0.0;
        for cell in line.split(',').skip(1) {
            let v: f64 = cell.trim().parse().expect("numeric spectrum cell");
            if v.is_finite() {
                od += 1.0 - v;
            }
        }
        proj.push(od);
    }
    proj
}
