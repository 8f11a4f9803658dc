//! Two-color guided-mode trap in the device gap and the single-photon
//! state-transfer capture Monte Carlo.
//!
//! A blue-detuned guided mode (repulsive, short evanescent tail) and a
//! red-detuned one (attractive, longer tail and tighter z envelope) combine
//! with the Casimir-Polder attraction into a level-dependent potential with
//! a local minimum at the gap center. The F4 surface is made shallower than
//! F3 by a per-level intensity scale. Capture proceeds by propagating F4
//! atoms to a trigger time, pumping the ones whose local pump-line Stark
//! shift falls in a selectivity band, applying a single-photon recoil kick,
//! and branching them to F3 with probability beta; an atom is captured when
//! its total F3 energy is below the local trap barrier.

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{cs_d2_recoil_speed, Transitions, CS_MASS};
use crate::dynamics::AtomState;
use crate::dynamics::integrator::{propagate, IntegratorOpts, Termination};
use crate::fields::{
    CpParams, Domain, GapStyle, Geometry2D, GmField, GmMode, Level, Polarization,
    PotentialStack, RefLine,
};
use crate::units::{ghz, nm, um, uw};
use crate::{Error, Result};

/// RNG stream base for the capture Monte Carlo; atom `id` uses stream
/// `CAPTURE_STREAM_BASE + id`.
pub const CAPTURE_STREAM_BASE: u64 = 3_000_000_000;

/// The two-color trap description.
#[derive(Debug, Clone)]
pub struct TwoColorTrap {
    pub geometry: Geometry2D,
    pub domain: Domain,
    pub transitions: Transitions,
    /// Blue-detuned (repulsive) guided mode.
    pub blue: GmMode,
    /// Red-detuned (attractive) guided mode.
    pub red: GmMode,
    pub cp: CpParams,
}

impl Default for TwoColorTrap {
    fn default() -> Self {
        let base = GmMode {
            polarization: Polarization::TE,
            mode_area: um(1.0) * um(0.3),
            reference: RefLine::D2,
            axial_contrast: 0.0,
            profile_grid: None,
            scale_f3: 1.0,
            scale_f4: 1.0,
            ..GmMode::default()
        };
        TwoColorTrap {
            geometry: Geometry2D::default(),
            domain: Domain::default(),
            transitions: Transitions::default(),
            blue: GmMode {
                power: uw(15.0),
                detuning: ghz(60.0),
                kappa_inv: nm(90.0),
                gap_style: GapStyle::Confined { z_waist: nm(350.0) },
                ..base.clone()
            },
            red: GmMode {
                power: uw(79.0),
                detuning: ghz(-600.0),
                kappa_inv: nm(200.0),
                gap_style: GapStyle::Confined { z_waist: nm(250.0) },
                // The F4 surface is shallower: only the attractive mode is
                // scaled down for it.
                scale_f4: 0.55,
                ..base
            },
            cp: CpParams {
                c3_ground: 6.626e-49,
                c3_excited: 1.3252e-48,
            },
        }
    }
}

impl TwoColorTrap {
    /// Compose the trap into a potential stack (no conveyor lattice).
    pub fn build(&self) -> Result<PotentialStack> {
        let mut problems = Vec::new();
        let blue = GmField::new(self.blue.clone(), &self.transitions)
            .map_err(|e| Error::Config(vec![format!("trap.blue: {e}")]))?;
        let red = GmField::new(self.red.clone(), &self.transitions)
            .map_err(|e| Error::Config(vec![format!("trap.red: {e}")]))?;
        if !blue.is_repulsive() {
            problems.push("trap.blue: detuning must be blue (repulsive)".to_string());
        }
        if red.is_repulsive() {
            problems.push("trap.red: detuning must be red (attractive)".to_string());
        }
        if self.cp.c3_ground < 0.0 || self.cp.c3_excited < 0.0 {
            problems.push("trap.cp: C3 coefficients must be non-negative".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let mut stack = PotentialStack::new(self.geometry.clone(), self.domain, self.transitions);
        stack.gms = vec![blue, red];
        stack.cp = Some(self.cp);
        Ok(stack)
    }

    /// Default minimum search window: the open gap column.
    pub fn search_window(&self) -> SearchWindow {
        SearchWindow {
            y_half: 0.5 * self.geometry.gap - nm(2.0),
            z_half: 0.5 * self.geometry.thickness + nm(500.0),
            step: nm(2.0),
        }
    }

    /// Locate the trap minimum for a level, starting from the gap center.
    pub fn find_minimum(&self, level: Level) -> Result<TrapMinimum> {
        let stack = self.build()?;
        find_trap_minimum(
            &LevelSurface {
                stack: &stack,
                level,
            },
            &self.search_window(),
            Vector2::new(0.0, 0.0),
        )
    }
}

/// A static 2D potential surface (J) with its gradient (J/m).
pub trait PotentialSurface: Sync {
    fn potential(&self, pos: Vector2<f64>) -> f64;
    fn gradient(&self, pos: Vector2<f64>) -> Vector2<f64>;
}

/// A [`PotentialStack`] frozen at t = 0 for one level.
pub struct LevelSurface<'a> {
    pub stack: &'a PotentialStack,
    pub level: Level,
}

impl PotentialSurface for LevelSurface<'_> {
    fn potential(&self, pos: Vector2<f64>) -> f64 {
        self.stack.potential_soft(pos, 0.0, self.level)
    }

    fn gradient(&self, pos: Vector2<f64>) -> Vector2<f64> {
        -self.stack.force_soft(pos, 0.0, self.level)
    }
}

/// Rectangular search window centered on the gap, and the grid step of the
/// barrier (watershed) search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchWindow {
    pub y_half: f64,
    pub z_half: f64,
    pub step: f64,
}

/// A located trap minimum.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrapMinimum {
    /// Position of the minimum (m).
    pub position: Vector2<f64>,
    /// Potential at the minimum (J).
    pub value: f64,
    /// Barrier height to the nearest escape (J): the lowest level at which
    /// the minimum's basin connects to the window border.
    pub depth: f64,
    /// Harmonic frequencies (rad/s) from the Hessian eigenvalues, ascending.
    pub frequencies: [f64; 2],
}

impl TrapMinimum {
    /// Absolute energy an atom must stay below to remain bound (J).
    pub fn barrier_level(&self) -> f64 {
        self.value + self.depth
    }
}

/// Central-difference Hessian of the surface from its analytic gradient.
fn hessian(surface: &dyn PotentialSurface, pos: Vector2<f64>, h: f64) -> Matrix2<f64> {
    let mut m = Matrix2::zeros();
    for i in 0..2 {
        let mut pp = pos;
        let mut pm = pos;
        pp[i] += h;
        pm[i] -= h;
        let gp = surface.gradient(pp);
        let gm = surface.gradient(pm);
        for j in 0..2 {
            m[(j, i)] = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
    // Symmetrize away finite-difference noise.
    let t = m.transpose();
    (m + t) * 0.5
}

/// Refine `start` to the local minimum of `surface` inside `window`, then
/// measure curvature and the barrier to the nearest escape by a dense-grid
/// watershed.
///
/// Newton steps (falling back to backtracking gradient descent when the
/// Hessian is not positive definite) run until |grad U| drops below 1e-3 of
/// the local force scale. A saddle, a border hit, or a non-positive-definite
/// final Hessian is reported as an error.
pub fn find_trap_minimum(
    surface: &impl PotentialSurface,
    window: &SearchWindow,
    start: Vector2<f64>,
) -> Result<TrapMinimum> {
    let inside = |p: Vector2<f64>| p[0].abs() <= window.y_half && p[1].abs() <= window.z_half;
    if !inside(start) {
        return Err(Error::Numerical(
            "trap search start lies outside the search window".into(),
        ));
    }

    // Local force scale: the largest gradient magnitude near the start.
    let probe = 0.1 * window.y_half.min(window.z_half);
    let mut scale = 0.0f64;
    for (dy, dz) in [(0.0, 0.0), (probe, 0.0), (-probe, 0.0), (0.0, probe), (0.0, -probe)] {
        let p = start + Vector2::new(dy, dz);
        if inside(p) {
            scale = scale.max(surface.gradient(p).norm());
        }
    }
    let tol = 1e-3 * scale.max(1e-300);

    let fd_h = 0.25e-9;
    let mut x = start;
    let mut u = surface.potential(x);
    let mut converged = false;
    for _ in 0..200 {
        let g = surface.gradient(x);
        if g.norm() <= tol {
            converged = true;
            break;
        }
        let hess = hessian(surface, x, fd_h);
        let newton = hess
            .try_inverse()
            .map(|inv| -(inv * g))
            .filter(|step| step.dot(&g) < 0.0);
        let mut step = newton.unwrap_or_else(|| {
            -g * (0.05 * window.y_half.min(window.z_half) / g.norm())
        });
        // Backtrack until the move is inside the window and downhill.
        let mut accepted = false;
        for _ in 0..40 {
            let trial = x + step;
            if inside(trial) {
                let ut = surface.potential(trial);
                if ut < u {
                    x = trial;
                    u = ut;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // No downhill direction left at line-search resolution.
            converged = surface.gradient(x).norm() <= tol;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(
            "trap minimum refinement did not reach the gradient tolerance".into(),
        ));
    }

    let hess = hessian(surface, x, fd_h);
    let eig = nalgebra::SymmetricEigen::new(hess);
    let mut lam = [eig.eigenvalues[0], eig.eigenvalues[1]];
    lam.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if lam[0] <= 0.0 {
        return Err(Error::Numerical(
            "stationary point is a saddle, not a trap minimum".into(),
        ));
    }
    let frequencies = [(lam[0] / CS_MASS).sqrt(), (lam[1] / CS_MASS).sqrt()];

    let depth = watershed_depth(surface, window, x, u)?;
    Ok(TrapMinimum {
        position: x,
        value: u,
        depth,
        frequencies,
    })
}

/// Barrier height between the minimum and the window border.
///
/// Nodes of a dense grid are flooded in ascending potential order with a
/// union-find; the barrier is the level at which the component holding the
/// minimum first touches a border (escape) node.
fn watershed_depth(
    surface: &impl PotentialSurface,
    window: &SearchWindow,
    min_pos: Vector2<f64>,
    min_value: f64,
) -> Result<f64> {
    let ny = ((2.0 * window.y_half / window.step).round() as usize).max(2) + 1;
    let nz = ((2.0 * window.z_half / window.step).round() as usize).max(2) + 1;
    let y_at = |i: usize| -window.y_half + 2.0 * window.y_half * i as f64 / (ny - 1) as f64;
    let z_at = |j: usize| -window.z_half + 2.0 * window.z_half * j as f64 / (nz - 1) as f64;
    let idx = |i: usize, j: usize| j * ny + i;

    let values: Vec<f64> = (0..ny * nz)
        .into_par_iter()
        .map(|n| surface.potential(Vector2::new(y_at(n % ny), z_at(n / ny))))
        .collect();

    // Grid node nearest the refined minimum.
    let mi = (((min_pos[0] + window.y_half) / (2.0 * window.y_half) * (ny - 1) as f64).round()
        as usize)
        .min(ny - 1);
    let mj = (((min_pos[1] + window.z_half) / (2.0 * window.z_half) * (nz - 1) as f64).round()
        as usize)
        .min(nz - 1);
    let min_node = idx(mi, mj);

    let mut order: Vec<u32> = (0..(ny * nz) as u32).collect();
    order.sort_by(|&a, &b| values[a as usize].partial_cmp(&values[b as usize]).unwrap());

    let mut parent: Vec<u32> = (0..(ny * nz) as u32).collect();
    let mut escapes: Vec<bool> = vec![false; ny * nz];
    let mut processed = vec![false; ny * nz];
    fn find(parent: &mut [u32], mut a: u32) -> u32 {
        while parent[a as usize] != a {
            parent[a as usize] = parent[parent[a as usize] as usize];
            a = parent[a as usize];
        }
        a
    }

    for &n in &order {
        let n = n as usize;
        let (i, j) = (n % ny, n / ny);
        processed[n] = true;
        if i == 0 || i == ny - 1 || j == 0 || j == nz - 1 {
            escapes[find(&mut parent, n as u32) as usize] = true;
        }
        let mut neighbors = Vec::with_capacity(4);
        if i > 0 {
            neighbors.push(idx(i - 1, j));
        }
        if i + 1 < ny {
            neighbors.push(idx(i + 1, j));
        }
        if j > 0 {
            neighbors.push(idx(i, j - 1));
        }
        if j + 1 < nz {
            neighbors.push(idx(i, j + 1));
        }
        for m in neighbors {
            if processed[m] {
                let ra = find(&mut parent, n as u32);
                let rb = find(&mut parent, m as u32);
                if ra != rb {
                    let esc = escapes[ra as usize] || escapes[rb as usize];
                    parent[ra as usize] = rb;
                    escapes[rb as usize] = esc;
                }
            }
        }
        let rm = find(&mut parent, min_node as u32);
        if processed[min_node] && escapes[rm as usize] {
            return Ok((values[n] - min_value).max(0.0));
        }
    }
    Err(Error::Numerical(
        "watershed never connected the minimum to the border".into(),
    ))
}

/// Knobs of the capture Monte Carlo.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CaptureConfig {
    /// Pump trigger time (s) after the start of propagation on F4.
    pub trigger: f64,
    /// Selectivity band (rad/s) on the local pump-line Stark shift
    /// (excited minus F4 surface over hbar); only atoms inside are pumped.
    pub shift_window: (f64, f64),
    /// Branching ratio to F3 after the pump cycle.
    pub beta: f64,
    /// Recoil kick speed (m/s), applied in a random in-plane direction.
    pub recoil_speed: f64,
    /// Replace the computed F3 barrier level (J) when set.
    pub barrier_override: Option<f64>,
    pub seed: u64,
    pub opts: IntegratorOpts,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        CaptureConfig {
            trigger: 0.5e-6,
            shift_window: (-1e12, 1e12),
            beta: 0.5,
            recoil_speed: cs_d2_recoil_speed(),
            barrier_override: None,
            seed: 1,
            opts: IntegratorOpts::default(),
        }
    }
}

/// Per-atom capture outcome. Trigger-time state is kept so the analytic
/// per-atom capture probability can be recomputed from the report.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CaptureOutcome {
    pub id: u64,
    /// The atom crashed or left the domain before the trigger.
    pub lost_before_trigger: bool,
    pub trigger_pos: Vector2<f64>,
    /// Velocity at the trigger, before any recoil kick.
    pub trigger_vel: Vector2<f64>,
    /// Velocity after the pump event (equals `trigger_vel` if not pumped).
    pub final_vel: Vector2<f64>,
    /// Pump-line Stark shift at the trigger (rad/s); NaN when lost.
    pub shift: f64,
    pub pumped: bool,
    pub to_f3: bool,
    pub captured: bool,
    /// Total F3 energy after the kick (J); NaN unless branched to F3.
    pub energy_f3: f64,
}

/// Aggregate capture statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptureReport {
    pub total: usize,
    pub pumped: usize,
    pub to_f3: usize,
    pub captured: usize,
    /// captured / total.
    pub fraction: f64,
    /// Wilson 95% interval on the fraction.
    pub ci: (f64, f64),
    /// Barrier level used for the capture test (J).
    pub barrier: f64,
    /// The F3 trap minimum (absent when the barrier was overridden).
    pub trap: Option<TrapMinimum>,
    pub outcomes: Vec<CaptureOutcome>,
}

/// Wilson 95% confidence interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Fraction of in-plane kick directions that leave the atom below the
/// barrier: P over angles of (m/2)|v + u n̂|² + u_f3 < barrier.
pub fn capture_arc_fraction(
    vel: Vector2<f64>,
    u_f3: f64,
    barrier: f64,
    recoil_speed: f64,
    mass: f64,
) -> f64 {
    let budget = 2.0 * (barrier - u_f3) / mass;
    let v2 = vel.norm_squared();
    let u = recoil_speed;
    let cross = 2.0 * u * vel.norm();
    if cross == 0.0 {
        return if v2 + u * u < budget { 1.0 } else { 0.0 };
    }
    // |v + u n̂|² = v² + u² + 2 u |v| cos φ < budget
    let c_star = (budget - v2 - u * u) / cross;
    if c_star >= 1.0 {
        1.0
    } else if c_star <= -1.0 {
        0.0
    } else {
        1.0 - c_star.acos() / std::f64::consts::PI
    }
}

/// Draw a thermal cloud for the capture stage: F4 atoms with Gaussian
/// positions around `center` (clamped at three sigma so the cloud stays off
/// the walls) and Maxwell velocities for `temperature` (K). One fixed RNG
/// stream so the draw is independent of every other module's streams.
pub fn thermal_cloud(
    n: usize,
    center: Vector2<f64>,
    sigma_y: f64,
    sigma_z: f64,
    temperature: f64,
    seed: u64,
) -> Vec<AtomState> {
    use rand_distr::StandardNormal;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(CAPTURE_STREAM_BASE - 1);
    let sigma_v = (crate::constants::KB * temperature / CS_MASS).sqrt();
    (0..n)
        .map(|i| {
            let dy: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_y;
            let dz: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_z;
            let vy: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_v;
            let vz: f64 = rng.sample::<f64, _>(StandardNormal) * sigma_v;
            AtomState {
                id: i as u64,
                pos: center
                    + Vector2::new(
                        dy.clamp(-3.0 * sigma_y, 3.0 * sigma_y),
                        dz.clamp(-3.0 * sigma_z, 3.0 * sigma_z),
                    ),
                vel: Vector2::new(vy, vz),
                level: Level::F4,
            }
        })
        .collect()
}

/// Run the capture Monte Carlo over an ensemble started on the F4 surface.
pub fn capture_monte_carlo(
    trap: &TwoColorTrap,
    atoms: &[AtomState],
    cfg: &CaptureConfig,
) -> Result<CaptureReport> {
    if !(0.0..=1.0).contains(&cfg.beta) {
        return Err(Error::Config(vec![format!(
            "capture.beta: {} outside [0, 1]",
            cfg.beta
        )]));
    }
    if cfg.trigger < 0.0 {
        return Err(Error::Config(vec!["capture.trigger: negative".into()]));
    }
    let stack = trap.build()?;
    let (barrier, trap_min) = match cfg.barrier_override {
        Some(b) => (b, None),
        None => {
            let m = trap.find_minimum(Level::F3)?;
            (m.barrier_level(), Some(m))
        }
    };

    let geometry = &stack.geometry;
    let domain = &stack.domain;
    let outcomes: Vec<CaptureOutcome> = atoms
        .par_iter()
        .map(|atom| {
            let accel =
                |p: Vector2<f64>, t: f64| stack.force_soft(p, t, Level::F4) / CS_MASS;
            let sdf = |p: Vector2<f64>| geometry.distance(p);
            let in_domain = |p: Vector2<f64>| domain.contains(p);
            let y0 = [atom.pos[0], atom.pos[1], atom.vel[0], atom.vel[1]];
            let out = propagate(
                &accel,
                &sdf,
                &in_domain,
                &cfg.opts,
                y0,
                0.0,
                cfg.trigger,
                None,
                |_, _| {},
            );
            let trigger_vel = Vector2::new(out.state[2], out.state[3]);
            let mut outcome = CaptureOutcome {
                id: atom.id,
                lost_before_trigger: out.status != Termination::Alive,
                trigger_pos: Vector2::new(out.state[0], out.state[1]),
                trigger_vel,
                final_vel: trigger_vel,
                shift: f64::NAN,
                pumped: false,
                to_f3: false,
                captured: false,
                energy_f3: f64::NAN,
            };
            if outcome.lost_before_trigger {
                return outcome;
            }
            let shift = match stack.light_shift(outcome.trigger_pos, cfg.trigger, Level::F4) {
                Ok(s) => s,
                Err(_) => return outcome,
            };
            outcome.shift = shift;
            outcome.pumped = shift >= cfg.shift_window.0 && shift <= cfg.shift_window.1;
            if !outcome.pumped {
                return outcome;
            }
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(CAPTURE_STREAM_BASE + atom.id);
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            outcome.final_vel =
                outcome.trigger_vel + cfg.recoil_speed * Vector2::new(theta.cos(), theta.sin());
            if rng.gen::<f64>() < cfg.beta {
                outcome.to_f3 = true;
                let u_f3 = stack.potential_soft(outcome.trigger_pos, cfg.trigger, Level::F3);
                outcome.energy_f3 = 0.5 * CS_MASS * outcome.final_vel.norm_squared() + u_f3;
                outcome.captured = outcome.energy_f3 < barrier;
            }
            outcome
        })
        .collect();

    let pumped = outcomes.iter().filter(|o| o.pumped).count();
    let to_f3 = outcomes.iter().filter(|o| o.to_f3).count();
    let captured = outcomes.iter().filter(|o| o.captured).count();
    let total = atoms.len();
    let fraction = if total > 0 {
        captured as f64 / total as f64
    } else {
        0.0
    };
    Ok(CaptureReport {
        total,
        pumped,
        to_f3,
        captured,
        fraction,
        ci: wilson_interval(captured, total),
        barrier,
        trap: trap_min,
        outcomes,
    })
}
