//! Probe transmission spectra from ensembles of moving atoms.
//!
//! The probe rides one guided mode of the device. At each requested time the
//! ensemble is frozen, atoms close enough to the structure to couple are
//! assigned axial positions along the waveguide, and the chain transmission
//! is evaluated over the detuning grid with the transfer-matrix model.

pub mod matrix;

use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::constants::CS_D2_WAVELENGTH;
use crate::dynamics::Trajectory;
use crate::error::MatrixError;
use crate::fields::{GapStyle, GmMode, Polarization, PotentialStack};
use crate::units::{mhz, nm};
use crate::{Error, Result};

pub use matrix::{
    atom_matrix, atom_reflection, segment_matrix, total_matrix, transmission, AtomSnapshot,
    TransferMatrix,
};

/// RNG stream base for per-time axial position draws; time index `i` uses
/// stream `SPECTRUM_STREAM_BASE + i`, keeping the draw independent of
/// scheduling and of the other modules' streams.
pub const SPECTRUM_STREAM_BASE: u64 = 1_000_000_000;

/// Probe configuration.
#[derive(Debug, Clone)]
pub struct ProbeConfig {
    /// Spatial profile of the probe mode. Only the geometry-related fields
    /// (polarization, decay length, gap style, imported grid, axial
    /// contrast) matter; the probe is weak, so its power does not shift
    /// atoms.
    pub profile: GmMode,
    /// Detuning grid (rad/s) the spectrum is evaluated on.
    pub detunings: Vec<f64>,
    /// Guided decay rate at the intensity peak (rad/s).
    pub gamma_1d_peak: f64,
    /// Decay rate into all non-guided channels (rad/s).
    pub gamma_prime: f64,
    /// Effective index for traveling (TM) modes; k = 2*pi*n_eff/lambda.
    pub n_eff: f64,
    /// Atoms with relative transverse intensity below this couple too weakly
    /// to matter and are skipped.
    pub coupling_cutoff: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let profile = GmMode {
            polarization: Polarization::TE,
            axial_contrast: 1.0,
            gap_style: GapStyle::Plateau,
            kappa_inv: nm(150.0),
            ..Default::default()
        };
        let n = 161;
        let span = mhz(40.0);
        let detunings = (0..n)
            .map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64)
            .collect();
        ProbeConfig {
            profile,
            detunings,
            gamma_1d_peak: 0.5 * crate::constants::CS_D2_GAMMA,
            gamma_prime: crate::constants::CS_D2_GAMMA,
            n_eff: 1.7,
            coupling_cutoff: 1e-4,
        }
    }
}

impl ProbeConfig {
    /// Effective wavenumber of the probe mode (rad/m). A TE probe near the
    /// band edge is a standing-wave Bloch mode at k = pi/a; a TM probe is an
    /// effectively traveling wave with configurable index.
    pub fn wavenumber(&self, geom: &crate::fields::Geometry2D) -> f64 {
        match self.profile.polarization {
            Polarization::TE => PI / geom.unit_cell,
            Polarization::TM => 2.0 * PI * self.n_eff / CS_D2_WAVELENGTH,
        }
    }

    /// Guided decay rate for a given relative probe intensity.
    pub fn local_coupling(&self, rel_intensity: f64) -> f64 {
        self.gamma_1d_peak * rel_intensity
    }

    /// Configuration violations, empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.detunings.is_empty() {
            v.push("probe.detunings: grid is empty".into());
        }
        if !self.gamma_1d_peak.is_finite() || self.gamma_1d_peak < 0.0 {
            v.push(format!(
                "probe.gamma_1d_peak: must be >= 0, got {}",
                self.gamma_1d_peak
            ));
        }
        if !self.gamma_prime.is_finite() || self.gamma_prime <= 0.0 {
            v.push(format!(
                "probe.gamma_prime: must be > 0, got {}",
                self.gamma_prime
            ));
        }
        if !(self.n_eff > 0.0) {
            v.push(format!("probe.n_eff: must be > 0, got {}", self.n_eff));
        }
        if !(self.coupling_cutoff > 0.0 && self.coupling_cutoff <= 1.0) {
            v.push(format!(
                "probe.coupling_cutoff: must be in (0, 1], got {}",
                self.coupling_cutoff
            ));
        }
        v
    }
}

/// Effective detuning an atom at `pos` sees for probe detuning `delta_p`:
/// the probe line is shifted by the differential light shift of its
/// environment.
pub fn local_detuning(
    delta_p: f64,
    pos: Vector2<f64>,
    t: f64,
    stack: &PotentialStack,
    ground: crate::fields::Level,
) -> Result<f64> {
    Ok(delta_p - stack.light_shift(pos, t, ground)?)
}

/// Draw `n` axial positions over the patterned length with density
/// proportional to the probe's axial intensity, sorted ascending with ties
/// nudged apart by much less than a unit cell.
pub fn distribute_x(
    n: usize,
    contrast: f64,
    length: f64,
    unit_cell: f64,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut xs = Vec::with_capacity(n);
    while xs.len() < n {
        let x = rng.gen::<f64>() * length;
        let density = (1.0 - contrast) + contrast * (2.0 * PI * x / unit_cell).cos().powi(2);
        if rng.gen::<f64>() < density {
            xs.push(x);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for i in 1..xs.len() {
        if xs[i] <= xs[i - 1] {
            xs[i] = xs[i - 1] + 1e-4 * unit_cell;
        }
    }
    xs
}

/// Freeze the ensemble at time `t` and build the probe's view of it:
/// coupled atoms with axial positions, local couplings, and local shifts.
///
/// Atoms whose interpolated position grazes the dielectric or leaves an
/// imported profile grid are dropped from the chain (they are about to crash
/// and couple like a crashed atom: not at all).
pub fn snapshot_at(
    trajectories: &[Trajectory],
    t: f64,
    probe: &ProbeConfig,
    stack: &PotentialStack,
    rng: &mut impl Rng,
) -> Result<Vec<AtomSnapshot>> {
    let geom = &stack.geometry;
    let mut kept: Vec<(f64, f64)> = Vec::new(); // (transverse rel, shift)
    for traj in trajectories {
        let Some(pos) = traj.position_at(t) else {
            continue;
        };
        let Ok(rel) = probe.profile.profile_rel(pos, geom) else {
            continue;
        };
        if rel < probe.coupling_cutoff {
            continue;
        }
        let Ok(shift) = stack.light_shift(pos, t, traj.level) else {
            continue;
        };
        kept.push((rel, shift));
    }
    let xs = distribute_x(
        kept.len(),
        probe.profile.axial_contrast,
        geom.length(),
        geom.unit_cell,
        rng,
    );
    Ok(xs
        .into_iter()
        .zip(kept)
        .map(|(x, (rel, shift))| AtomSnapshot {
            x,
            gamma_1d: probe.local_coupling(rel * probe.profile.axial_rel(x, geom.unit_cell)),
            shift,
        })
        .collect())
}

/// Raw transmission surface T(detuning, time).
#[derive(Debug, Clone)]
pub struct SpectrumGrid {
    /// Snapshot times (s).
    pub times: Vec<f64>,
    /// Probe detunings (rad/s).
    pub detunings: Vec<f64>,
    /// Row-major transmission values, one row per time.
    pub values: Vec<f64>,
    /// Number of coupled atoms in each time snapshot.
    pub coupled: Vec<usize>,
}

impl SpectrumGrid {
    pub fn value(&self, time_idx: usize, det_idx: usize) -> f64 {
        self.values[time_idx * self.detunings.len() + det_idx]
    }

    pub fn row(&self, time_idx: usize) -> &[f64] {
        let n = self.detunings.len();
        &self.values[time_idx * n..(time_idx + 1) * n]
    }

    /// Deepest point of the surface: (time index, detuning index, T).
    pub fn min_transmission(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::INFINITY);
        for ti in 0..self.times.len() {
            for di in 0..self.detunings.len() {
                let v = self.value(ti, di);
                if v < best.2 {
                    best = (ti, di, v);
                }
            }
        }
        best
    }
}

/// Compute the transmission surface over `times` x `probe.detunings`.
///
/// Each time gets its own RNG stream derived from `seed` and the time index,
/// so results do not depend on thread scheduling. Times must lie inside the
/// trajectory sampling span.
pub fn spectrum_grid(
    trajectories: &[Trajectory],
    times: &[f64],
    probe: &ProbeConfig,
    stack: &PotentialStack,
    seed: u64,
) -> Result<SpectrumGrid> {
    let violations = probe.validate();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    // Coverage: the sampled span of the trajectory set must include every
    // requested time (atoms that ended early are simply gone at later times).
    let span = trajectories
        .iter()
        .filter_map(|tr| {
            Some((tr.samples.first()?.t, tr.samples.last()?.t))
        })
        .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)));
    if let Some((lo, hi)) = span {
        for &t in times {
            if t < lo - 1e-15 || t > hi + 1e-15 {
                return Err(Error::Matrix(MatrixError::Coverage { t }));
            }
        }
    }

    let k = probe.wavenumber(&stack.geometry);
    let rows: Result<Vec<(Vec<f64>, usize)>> = times
        .par_iter()
        .enumerate()
        .map(|(ti, &t)| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(SPECTRUM_STREAM_BASE + ti as u64);
            let snaps = snapshot_at(trajectories, t, probe, stack, &mut rng)?;
            let mut row = Vec::with_capacity(probe.detunings.len());
            for &dp in &probe.detunings {
                let m = total_matrix(&snaps, dp, k, probe.gamma_prime)?;
                let (tr, _) = transmission(&m)?;
                row.push(tr);
            }
            Ok((row, snaps.len()))
        })
        .collect();
    let rows = rows?;

    let mut values = Vec::with_capacity(times.len() * probe.detunings.len());
    let mut coupled = Vec::with_capacity(times.len());
    for (row, n) in rows {
        values.extend_from_slice(&row);
        coupled.push(n);
    }
    Ok(SpectrumGrid {
        times: times.to_vec(),
        detunings: probe.detunings.clone(),
        values,
        coupled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::Transitions;
    use crate::dynamics::{TermStatus, TrajClass, TrajSample};
    use crate::fields::{Domain, Geometry2D, Level};
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn empty_stack() -> PotentialStack {
        PotentialStack::new(Geometry2D::default(), Domain::default(), Transitions::default())
    }

    fn stationary_trajectory(id: u64, pos: Vector2<f64>, t_end: f64, n: usize) -> Trajectory {
        let samples: Vec<TrajSample> = (0..=n)
            .map(|i| TrajSample {
                t: t_end * i as f64 / n as f64,
                pos,
                vel: Vector2::zeros(),
            })
            .collect();
        Trajectory {
            id,
            level: Level::F3,
            samples,
            status: TermStatus::Alive,
            t_final: t_end,
            final_pos: pos,
            final_vel: Vector2::zeros(),
            class: TrajClass::Center,
        }
    }

    #[test]
    fn wavenumber_by_polarization() {
        let geom = Geometry2D::default();
        let mut probe = ProbeConfig::default();
        probe.profile.polarization = Polarization::TE;
        assert_relative_eq!(
            probe.wavenumber(&geom),
            PI / geom.unit_cell,
            max_relative = 1e-12
        );
        probe.profile.polarization = Polarization::TM;
        assert_relative_eq!(
            probe.wavenumber(&geom),
            2.0 * PI * 1.7 / CS_D2_WAVELENGTH,
            max_relative = 1e-12
        );
    }

    #[test]
    fn coupling_is_linear_in_intensity() {
        let probe = ProbeConfig::default();
        assert_eq!(probe.local_coupling(0.0), 0.0);
        assert_relative_eq!(
            probe.local_coupling(1.0),
            probe.gamma_1d_peak,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            probe.local_coupling(0.5),
            0.5 * probe.local_coupling(1.0),
            max_relative = 1e-15
        );
    }

    #[test]
    fn uniform_x_distribution_for_zero_contrast() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let length = 55.5e-6;
        let n = 100_000;
        let xs = distribute_x(n, 0.0, length, 370e-9, &mut rng);
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for x in &xs {
            counts[(((x / length) * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let expect = n as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        let dist = ChiSquared::new((bins - 1) as f64).unwrap();
        assert!(chi2 < dist.inverse_cdf(0.99), "chi2 = {chi2}");
    }

    #[test]
    fn bloch_x_distribution_for_full_contrast() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let a = 370e-9;
        let length = 150.0 * a;
        let n = 100_000;
        let xs = distribute_x(n, 1.0, length, a, &mut rng);
        // Fold into one cell and compare against cos^2 bin masses.
        let bins = 20;
        let mut counts = vec![0usize; bins];
        for x in &xs {
            let u = (x / a).fract();
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let chi2: f64 = (0..bins)
            .map(|i| {
                let u0 = i as f64 / bins as f64;
                let u1 = (i + 1) as f64 / bins as f64;
                // integral of 2 cos^2(2 pi u) du over the bin
                let mass = (u1 - u0)
                    + ((4.0 * PI * u1).sin() - (4.0 * PI * u0).sin()) / (4.0 * PI);
                let e = n as f64 * mass;
                (counts[i] as f64 - e).powi(2) / e
            })
            .sum();
        let dist = ChiSquared::new((bins - 1) as f64).unwrap();
        assert!(chi2 < dist.inverse_cdf(0.99), "chi2 = {chi2}");
    }

    #[test]
    fn bloch_node_is_never_drawn() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let a = 370e-9;
        let xs = distribute_x(1_000_000, 1.0, 150.0 * a, a, &mut rng);
        // Nodes of cos^2(2 pi x / a) sit at x = a/4 and 3a/4 (mod a).
        let half_window = 0.5e-3;
        let hits = xs
            .iter()
            .filter(|x| {
                let u = (*x / a).fract();
                (u - 0.25).abs() < half_window || (u - 0.75).abs() < half_window
            })
            .count();
        assert_eq!(hits, 0);
    }

    #[test]
    fn distributed_positions_are_strictly_sorted() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let xs = distribute_x(10_000, 0.5, 55.5e-6, 370e-9, &mut rng);
        for w in xs.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn empty_ensemble_transmits_everything() {
        let stack = empty_stack();
        let probe = ProbeConfig::default();
        let grid = spectrum_grid(&[], &[0.0, 1e-6], &probe, &stack, 5).unwrap();
        assert!(grid.values.iter().all(|&v| v == 1.0));
        assert_eq!(grid.coupled, vec![0, 0]);
    }

    #[test]
    fn far_atom_does_not_couple() {
        let stack = empty_stack();
        let probe = ProbeConfig::default();
        let traj = stationary_trajectory(0, Vector2::new(0.0, 20e-6), 1e-6, 10);
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let snaps = snapshot_at(&[traj], 0.5e-6, &probe, &stack, &mut rng).unwrap();
        assert!(snaps.is_empty());
    }

    #[test]
    fn stationary_atom_spectrum_matches_closed_form() {
        let stack = empty_stack();
        let mut probe = ProbeConfig::default();
        // TM probe, no axial modulation: coupling is exactly the peak value
        // anywhere in the gap (plateau profile).
        probe.profile.polarization = Polarization::TM;
        probe.profile.axial_contrast = 0.0;
        let g1d = probe.gamma_1d_peak;
        let gp = probe.gamma_prime;
        let traj = stationary_trajectory(0, Vector2::new(0.0, 0.0), 10e-6, 100);
        let times = [0.0, 3e-6, 9.9e-6];
        let grid = spectrum_grid(&[traj], &times, &probe, &stack, 42).unwrap();
        for ti in 0..times.len() {
            for (di, &dp) in grid.detunings.iter().enumerate() {
                let amp = Complex64::new(dp, gp / 2.0) / Complex64::new(dp, (g1d + gp) / 2.0);
                assert_relative_eq!(
                    grid.value(ti, di),
                    amp.norm_sqr(),
                    max_relative = 1e-12
                );
            }
        }
        assert_eq!(grid.coupled, vec![1, 1, 1]);
    }

    #[test]
    fn more_atoms_deepen_the_dip() {
        let stack = empty_stack();
        let probe = ProbeConfig::default();
        let mk = |n: u64| -> Vec<Trajectory> {
            (0..n)
                .map(|i| {
                    stationary_trajectory(
                        i,
                        Vector2::new(0.0, 20e-9 * i as f64),
                        1e-6,
                        10,
                    )
                })
                .collect()
        };
        let few = spectrum_grid(&mk(3), &[0.5e-6], &probe, &stack, 7).unwrap();
        let many = spectrum_grid(&mk(6), &[0.5e-6], &probe, &stack, 7).unwrap();
        assert!(many.min_transmission().2 < few.min_transmission().2);
    }

    #[test]
    fn times_outside_sampled_span_are_rejected() {
        let stack = empty_stack();
        let probe = ProbeConfig::default();
        let traj = stationary_trajectory(0, Vector2::new(0.0, 0.0), 1e-6, 10);
        let err = spectrum_grid(&[traj], &[2e-6], &probe, &stack, 1).unwrap_err();
        assert!(matches!(
            err,
            Error::Matrix(MatrixError::Coverage { .. })
        ));
    }

    #[test]
    fn light_shift_moves_the_dip() {
        // A blue GM shifting only the ground state pushes the resonance to
        // negative probe detunings.
        let tr = Transitions {
            excited_shift_ratio: 0.0,
            ..Default::default()
        };
        let mut stack =
            PotentialStack::new(Geometry2D::default(), Domain::default(), tr.clone());
        let gm = crate::fields::GmField::new(
            GmMode {
                detuning: crate::units::ghz(58.0),
                ..Default::default()
            },
            &tr,
        )
        .unwrap();
        stack.gms = vec![gm];
        let pos = Vector2::new(0.0, 0.0);
        let shift = stack.light_shift(pos, 0.0, Level::F3).unwrap();
        assert!(shift < 0.0, "blue GM, ground-only shift: {shift}");

        let mut probe = ProbeConfig::default();
        probe.profile.polarization = Polarization::TM;
        probe.profile.axial_contrast = 0.0;
        // Grid straddling the predicted shifted line.
        probe.detunings = (0..=200).map(|i| 2.0 * shift * i as f64 / 200.0).collect();
        probe.detunings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let traj = stationary_trajectory(0, pos, 1e-6, 10);
        let grid = spectrum_grid(&[traj], &[0.5e-6], &probe, &stack, 3).unwrap();
        let (_, di, _) = grid.min_transmission();
        assert_relative_eq!(
            grid.detunings[di],
            shift,
            max_relative = 0.0,
            epsilon = 1.5 * (grid.detunings[1] - grid.detunings[0])
        );
        let delta_eff =
            local_detuning(grid.detunings[di], pos, 0.0, &stack, Level::F3).unwrap();
        assert!(delta_eff.abs() < (grid.detunings[1] - grid.detunings[0]));
    }
}
