//! Ensemble initialization, trajectory propagation, and outcome
//! classification.
//!
//! Atoms start in thermal equilibrium inside a handful of lattice pancakes
//! near the launch plane, co-moving with the conveyor, and are then pushed
//! through the full potential stack until they reach the end time, crash
//! into the structure, or leave the domain.

pub mod integrator;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::CS_MASS;
use crate::fields::{Geometry2D, Level, PotentialStack};
use crate::{Error, Result};

pub use integrator::{
    propagate, IntegratorOpts, Propagation, SamplePlan, Termination, CRASH_RESOLUTION,
};

/// RNG stream offset for ensemble sampling; one stream per atom id.
pub const ENSEMBLE_STREAM_BASE: u64 = 0;

/// A single atom before propagation.
#[derive(Debug, Clone, Copy)]
pub struct AtomState {
    pub id: u64,
    pub pos: Vector2<f64>,
    pub vel: Vector2<f64>,
    pub level: Level,
}

/// Thermal ensemble description. Positions and velocities are drawn from a
/// Boltzmann distribution in the local lattice wells; the mean velocity is
/// the conveyor velocity.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnsembleSpec {
    /// Atoms per occupied pancake.
    pub atoms_per_pancake: usize,
    /// Number of consecutive occupied pancakes.
    pub pancakes: usize,
    /// Temperature (K).
    pub temperature: f64,
    /// Launch plane (m); pancakes occupy the wells just below this height.
    pub launch_z: f64,
    /// Hyperfine level the atoms start in.
    pub level: Level,
    /// Master seed; every atom derives its own RNG stream from it.
    pub seed: u64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        EnsembleSpec {
            atoms_per_pancake: 500,
            pancakes: 5,
            temperature: 20e-6,
            launch_z: 60e-6,
            level: Level::F3,
            seed: 1,
        }
    }
}

/// Draw the initial ensemble. Each atom uses RNG stream
/// `ENSEMBLE_STREAM_BASE + id`, so the draw is independent of iteration
/// order and of the total atom count.
pub fn sample_ensemble(spec: &EnsembleSpec, stack: &PotentialStack) -> Result<Vec<AtomState>> {
    let lattice = stack
        .lattice
        .as_ref()
        .ok_or_else(|| Error::Numerical("ensemble sampling requires a lattice".into()))?;
    if spec.temperature <= 0.0 {
        return Err(Error::Numerical(format!(
            "ensemble temperature must be positive, got {} K",
            spec.temperature
        )));
    }
    if spec.atoms_per_pancake == 0 || spec.pancakes == 0 {
        return Err(Error::Numerical(
            "ensemble needs at least one atom in one pancake".into(),
        ));
    }

    let kt = crate::constants::KB * spec.temperature;
    let sigma_v = (kt / CS_MASS).sqrt();
    let spacing = lattice.pancake_spacing();
    let sigma_y = sigma_v / lattice.radial_trap_omega(CS_MASS);
    let sigma_z = sigma_v / lattice.axial_trap_omega(CS_MASS);
    let window_y = (8.0 * sigma_y).min(0.999 * stack.domain.y_half);
    let window_z = (8.0 * sigma_z).min(0.25 * spacing);
    let drift = lattice.antinode_speed();

    let n = spec.atoms_per_pancake * spec.pancakes;
    let mut atoms = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let pancake = id as usize / spec.atoms_per_pancake;
        // Wells are placed strictly below the launch plane so the whole
        // pancake, including its thermal spread, stays inside the domain.
        let z_center =
            lattice.nearest_antinode(spec.launch_z - (pancake as f64 + 1.0) * spacing, 0.0);
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        rng.set_stream(ENSEMBLE_STREAM_BASE + id);

        let u_floor = stack
            .total_potential(Vector2::new(0.0, z_center), 0.0, spec.level)
            .map_err(|e| Error::Numerical(format!("well bottom is not free space: {e}")))?;

        let mut pos = None;
        for _ in 0..1_000_000 {
            let y = (2.0 * rng.gen::<f64>() - 1.0) * window_y;
            let z = z_center + (2.0 * rng.gen::<f64>() - 1.0) * window_z;
            let p = Vector2::new(y, z);
            let w = match stack.total_potential(p, 0.0, spec.level) {
                Ok(u) => (-(u - u_floor) / kt).exp(),
                Err(_) => 0.0,
            };
            if rng.gen::<f64>() < w {
                pos = Some(p);
                break;
            }
        }
        let pos = pos.ok_or_else(|| {
            Error::Numerical("position rejection sampling failed to accept".into())
        })?;

        let vy: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_v;
        let vz: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_v;
        atoms.push(AtomState {
            id,
            pos,
            vel: Vector2::new(vy, vz - drift),
            level: spec.level,
        });
    }
    Ok(atoms)
}

/// Where a trajectory ended up, decided against the structure geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrajClass {
    /// Reached the gap region between the two beams.
    Center,
    /// Passed the structure plane outside the beams.
    Sides,
    /// Everything else: crashed early, reflected, still above the structure.
    Other,
}

impl TrajClass {
    pub fn label(&self) -> &'static str {
        match self {
            TrajClass::Center => "center",
            TrajClass::Sides => "sides",
            TrajClass::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "center" => Some(TrajClass::Center),
            "sides" => Some(TrajClass::Sides),
            "other" => Some(TrajClass::Other),
            _ => None,
        }
    }
}

/// Terminal status of a trajectory, with the time it happened.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermStatus {
    /// Still going at the end time.
    Alive,
    /// Hit a dielectric surface.
    Crashed { t: f64 },
    /// Left the simulation domain.
    Exited { t: f64 },
    /// Integrator step underflow.
    Failed { t: f64 },
}

impl TermStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TermStatus::Alive => "alive",
            TermStatus::Crashed { .. } => "crashed",
            TermStatus::Exited { .. } => "exited",
            TermStatus::Failed { .. } => "failed",
        }
    }
}

/// One cadence sample along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct TrajSample {
    pub t: f64,
    pub pos: Vector2<f64>,
    pub vel: Vector2<f64>,
}

/// A propagated atom: its sampled path, terminal state, and class.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub id: u64,
    pub level: Level,
    pub samples: Vec<TrajSample>,
    pub status: TermStatus,
    pub t_final: f64,
    pub final_pos: Vector2<f64>,
    pub final_vel: Vector2<f64>,
    pub class: TrajClass,
}

impl Trajectory {
    /// Position at time `t`, linearly interpolated between cadence samples.
    /// `None` outside the sampled span — in particular after the atom
    /// crashed or left, whose last sample is the last cadence tick survived.
    pub fn position_at(&self, t: f64) -> Option<Vector2<f64>> {
        let first = self.samples.first()?;
        let last = self.samples.last()?;
        let eps = 1e-15;
        if t < first.t - eps || t > last.t + eps {
            return None;
        }
        let idx = self
            .samples
            .partition_point(|s| s.t < t - eps)
            .min(self.samples.len() - 1);
        let hi = &self.samples[idx];
        if idx == 0 || (hi.t - t).abs() <= eps {
            return Some(hi.pos);
        }
        let lo = &self.samples[idx - 1];
        let f = (t - lo.t) / (hi.t - lo.t);
        Some(lo.pos + (hi.pos - lo.pos) * f)
    }
}

/// Propagation request: how long to integrate and what to record.
#[derive(Debug, Clone, Copy)]
pub struct PropagationSpec {
    /// End time (s), measured from launch at t = 0.
    pub t_end: f64,
    /// Sampling cadence (s).
    pub cadence: f64,
    /// Sampling window; `None` records the whole run.
    pub window: Option<(f64, f64)>,
    pub opts: IntegratorOpts,
}

impl Default for PropagationSpec {
    fn default() -> Self {
        PropagationSpec {
            t_end: 140e-6,
            cadence: 100e-9,
            window: None,
            opts: IntegratorOpts::default(),
        }
    }
}

/// Contact shell (m): an atom whose integration stalls closer to the device
/// than this is counted as crashed. Inside this distance the surface
/// attraction dwarfs every trap scale, so no trajectory returns from it.
pub const CRASH_PROXIMITY: f64 = 5e-9;

/// Geometric regions used to classify trajectories.
#[derive(Debug, Clone, Copy)]
pub struct ClassifyParams {
    /// Half the gap width (m): the center region is `|y| < gap_half`.
    pub gap_half: f64,
    /// Half the slab thickness (m): the structure plane is `|z| <= slab_half`.
    pub slab_half: f64,
    /// Outer beam edge (m): the side region is `|y| >= outer_edge`.
    pub outer_edge: f64,
}

impl ClassifyParams {
    pub fn from_geometry(g: &Geometry2D) -> Self {
        ClassifyParams {
            gap_half: 0.5 * g.gap,
            slab_half: 0.5 * g.thickness,
            outer_edge: g.beam_outer_edge(),
        }
    }
}

/// Classify a path from its samples plus the terminal point.
///
/// Center wins over sides: an atom that threads the gap and later swings
/// wide still counts as delivered to the center.
pub fn classify_path<'a>(
    points: impl IntoIterator<Item = &'a Vector2<f64>>,
    params: &ClassifyParams,
) -> TrajClass {
    let mut sides = false;
    for p in points {
        if p[0].abs() < params.gap_half && p[1].abs() <= params.slab_half {
            return TrajClass::Center;
        }
        if p[1] <= -params.slab_half && p[0].abs() >= params.outer_edge {
            sides = true;
        }
    }
    if sides {
        TrajClass::Sides
    } else {
        TrajClass::Other
    }
}

/// Propagate one atom through the stack.
pub fn propagate_atom(
    atom: &AtomState,
    stack: &PotentialStack,
    spec: &PropagationSpec,
    classify: &ClassifyParams,
) -> Trajectory {
    let level = atom.level;
    let accel =
        move |p: Vector2<f64>, t: f64| stack.force_soft(p, t, level) / CS_MASS;
    let geometry = &stack.geometry;
    let sdf = move |p: Vector2<f64>| geometry.distance(p);
    let domain = &stack.domain;
    let in_domain = move |p: Vector2<f64>| domain.contains(p);

    let window = spec.window.unwrap_or((0.0, spec.t_end));
    let plan = SamplePlan {
        start: window.0,
        end: window.1.min(spec.t_end),
        cadence: spec.cadence,
    };
    let mut samples = Vec::new();
    let y0 = [atom.pos[0], atom.pos[1], atom.vel[0], atom.vel[1]];
    let out = propagate(
        &accel,
        &sdf,
        &in_domain,
        &spec.opts,
        y0,
        0.0,
        spec.t_end,
        Some(&plan),
        |t, y| {
            samples.push(TrajSample {
                t,
                pos: Vector2::new(y[0], y[1]),
                vel: Vector2::new(y[2], y[3]),
            })
        },
    );

    let final_pos = Vector2::new(out.state[0], out.state[1]);
    let status = match out.status {
        Termination::Alive => TermStatus::Alive,
        Termination::Crashed => TermStatus::Crashed { t: out.t },
        Termination::Exited => TermStatus::Exited { t: out.t },
        // Step control collapses in the surface-attraction singularity just
        // above the wall, where the plunge is already irreversible (the
        // surface term is an order of magnitude beyond every trap scale
        // there). Book that as the crash it is; an h_min exhaustion anywhere
        // else stays a genuine numerical failure.
        Termination::Failed if stack.geometry.distance(final_pos) < CRASH_PROXIMITY => {
            TermStatus::Crashed { t: out.t }
        }
        Termination::Failed => TermStatus::Failed { t: out.t },
    };
    let final_vel = Vector2::new(out.state[2], out.state[3]);
    let class = classify_path(
        samples.iter().map(|s| &s.pos).chain(std::iter::once(&final_pos)),
        classify,
    );
    Trajectory {
        id: atom.id,
        level,
        samples,
        status,
        t_final: out.t,
        final_pos,
        final_vel,
        class,
    }
}

/// Propagate a whole ensemble in parallel. Output order matches input order
/// regardless of scheduling.
pub fn integrate_ensemble(
    atoms: &[AtomState],
    stack: &PotentialStack,
    spec: &PropagationSpec,
    classify: &ClassifyParams,
) -> Vec<Trajectory> {
    atoms
        .par_iter()
        .map(|a| propagate_atom(a, stack, spec, classify))
        .collect()
}

/// Head counts over a trajectory set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub total: usize,
    pub center: usize,
    pub sides: usize,
    pub other: usize,
    pub crashed: usize,
    pub exited: usize,
    pub alive: usize,
    pub failed: usize,
}

pub fn summarize(trajectories: &[Trajectory]) -> EnsembleSummary {
    let mut s = EnsembleSummary {
        total: trajectories.len(),
        ..Default::default()
    };
    for t in trajectories {
        match t.class {
            TrajClass::Center => s.center += 1,
            TrajClass::Sides => s.sides += 1,
            TrajClass::Other => s.other += 1,
        }
        match t.status {
            TermStatus::Alive => s.alive += 1,
            TermStatus::Crashed { .. } => s.crashed += 1,
            TermStatus::Exited { .. } => s.exited += 1,
            TermStatus::Failed { .. } => s.failed += 1,
        }
    }
    s
}

/// Kinetic plus potential energy of a state, for conservation checks.
pub fn total_energy(
    stack: &PotentialStack,
    pos: Vector2<f64>,
    vel: Vector2<f64>,
    t: f64,
    level: Level,
) -> Result<f64> {
    let u = stack.total_potential(pos, t, level)?;
    Ok(0.5 * CS_MASS * vel.norm_squared() + u)
}
