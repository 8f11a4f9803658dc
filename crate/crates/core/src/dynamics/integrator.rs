//! Adaptive Dormand-Prince 5(4) propagation of a single atom on the
//! transverse plane, with surface-crossing bisection and fixed-cadence
//! sampling.
//!
//! The state vector is `[y, z, v_y, v_z]` (SI). Acceleration comes from a
//! softened force evaluator that stays finite through the dielectric, so
//! intermediate Runge-Kutta stages never blow up; actual crashes are decided
//! by the signed distance at accepted step endpoints and then localized in
//! time until the crossing position is pinned to [`CRASH_RESOLUTION`].

use nalgebra::Vector2;

/// Spatial resolution of crash localization (m).
pub const CRASH_RESOLUTION: f64 = 1e-10;

/// Error-control and step-size options.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct IntegratorOpts {
    /// Relative tolerance on the scaled RMS step error.
    pub rtol: f64,
    /// Absolute tolerance (SI units of each component).
    pub atol: f64,
    /// Initial step size (s).
    pub h0: f64,
    /// Step-size floor (s); controller failure below this marks the atom failed.
    pub h_min: f64,
    /// Step-size ceiling (s).
    pub h_max: f64,
}

impl Default for IntegratorOpts {
    fn default() -> Self {
        IntegratorOpts {
            rtol: 1e-8,
            atol: 1e-12,
            h0: 1e-9,
            h_min: 1e-15,
            h_max: 1e-6,
        }
    }
}

/// How a propagation ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// Reached the requested end time.
    Alive,
    /// Hit a dielectric surface at the recorded time.
    Crashed,
    /// Left the simulation domain at the recorded time.
    Exited,
    /// Step-size underflow; the trajectory is unreliable past this point.
    Failed,
}

/// Propagation result: final state, final time, and why it stopped.
#[derive(Debug, Clone, Copy)]
pub struct Propagation {
    pub state: [f64; 4],
    pub t: f64,
    pub status: Termination,
}

/// Fixed-cadence sampling plan; samples are emitted at
/// `start + i * cadence` for times inside `[start, end]`.
#[derive(Debug, Clone, Copy)]
pub struct SamplePlan {
    pub start: f64,
    pub end: f64,
    pub cadence: f64,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 - -92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

fn deriv(accel: &dyn Fn(Vector2<f64>, f64) -> Vector2<f64>, t: f64, y: &[f64; 4]) -> [f64; 4] {
    let a = accel(Vector2::new(y[0], y[1]), t);
    [y[2], y[3], a[0], a[1]]
}

fn axpy(y: &[f64; 4], h: f64, terms: &[(f64, &[f64; 4])]) -> [f64; 4] {
    let mut out = *y;
    for i in 0..4 {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// One Dormand-Prince step from (t, y) with size h. Returns the 5th-order
/// solution, the embedded error estimate, and the last stage (FSAL: it is
/// the derivative at the new point).
fn dp45_step(
    accel: &dyn Fn(Vector2<f64>, f64) -> Vector2<f64>,
    t: f64,
    y: &[f64; 4],
    h: f64,
    k1: &[f64; 4],
) -> ([f64; 4], [f64; 4], [f64; 4]) {
    let k2 = deriv(accel, t + C2 * h, &axpy(y, h, &[(A21, k1)]));
    let k3 = deriv(accel, t + C3 * h, &axpy(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = deriv(accel, t + C4 * h, &axpy(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = deriv(
        accel,
        t + C5 * h,
        &axpy(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = deriv(
        accel,
        t + h,
        &axpy(
            y,
            h,
            &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        ),
    );
    let y_new = axpy(
        y,
        h,
        &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
    );
    let k7 = deriv(accel, t + h, &y_new);
    let mut err = [0.0; 4];
    for i in 0..4 {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, err, k7)
}

fn error_norm(err: &[f64; 4], y: &[f64; 4], y_new: &[f64; 4], opts: &IntegratorOpts) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        let e = err[i] / sc;
        acc += e * e;
    }
    (acc / 4.0).sqrt()
}

/// Geometry-aware step cap: never move more than roughly half the current
/// surface distance in one step, so the structure cannot be tunneled through
/// between endpoint checks.
fn geometry_cap(d: f64, speed: f64) -> f64 {
    if speed <= 0.0 {
        f64::INFINITY
    } else {
        ((d.max(0.0) + 1e-9) / (2.0 * speed)).max(2e-10)
    }
}

/// Propagate from `t0` to `t_end`, emitting cadence samples and stopping on
/// surface crashes or domain exits.
///
/// * `accel` must be finite everywhere (use the softened stack force).
/// * `sdf` decides crashes: the atom has crashed where `sdf <= 0`.
/// * `in_domain` decides exits, checked at accepted endpoints only.
#[allow(clippy::too_many_arguments)]
pub fn propagate(
    accel: &dyn Fn(Vector2<f64>, f64) -> Vector2<f64>,
    sdf: &dyn Fn(Vector2<f64>) -> f64,
    in_domain: &dyn Fn(Vector2<f64>) -> bool,
    opts: &IntegratorOpts,
    y0: [f64; 4],
    t0: f64,
    t_end: f64,
    plan: Option<&SamplePlan>,
    mut on_sample: impl FnMut(f64, &[f64; 4]),
) -> Propagation {
    let mut t = t0;
    let mut y = y0;
    let mut h = opts.h0.min(opts.h_max);
    let mut k1 = deriv(accel, t, &y);

    // Next cadence tick at or after t0.
    let mut tick_index: u64 = 0;
    let mut next_tick = plan.map(|p| {
        let i = ((t0 - p.start) / p.cadence).ceil().max(0.0) as u64;
        tick_index = i;
        p.start + i as f64 * p.cadence
    });
    if let (Some(p), Some(tk)) = (plan, next_tick) {
        if (tk - t0).abs() < 1e-18 && tk <= p.end {
            on_sample(t0, &y);
            tick_index += 1;
            next_tick = Some(p.start + tick_index as f64 * p.cadence);
        }
    }

    while t < t_end {
        // Bind the step to the next event: end time or cadence tick.
        let mut h_try = h.min(opts.h_max);
        let d_here = sdf(Vector2::new(y[0], y[1]));
        let speed = (y[2] * y[2] + y[3] * y[3]).sqrt();
        h_try = h_try.min(geometry_cap(d_here, speed));
        let mut land: Option<f64> = None;
        let mut target = t_end;
        if let (Some(p), Some(tk)) = (plan, next_tick) {
            if tk <= p.end && tk < target {
                target = tk;
            }
        }
        if t + h_try >= target {
            h_try = target - t;
            land = Some(target);
        }

        let (y_new, err, k7) = dp45_step(accel, t, &y, h_try, &k1);
        let en = error_norm(&err, &y, &y_new, opts);
        if en <= 1.0 {
            let t_new = land.unwrap_or(t + h_try);
            // Crash check at the accepted endpoint.
            if sdf(Vector2::new(y_new[0], y_new[1])) <= 0.0 {
                let (yc, tc) = bisect_crossing(accel, sdf, t, &y, &k1, h_try);
                return Propagation {
                    state: yc,
                    t: tc,
                    status: Termination::Crashed,
                };
            }
            y = y_new;
            t = t_new;
            k1 = k7;
            if !in_domain(Vector2::new(y[0], y[1])) {
                return Propagation {
                    state: y,
                    t,
                    status: Termination::Exited,
                };
            }
            if let (Some(p), Some(tk)) = (plan, next_tick) {
                if (t - tk).abs() < 1e-15 && tk <= p.end {
                    on_sample(t, &y);
                    tick_index += 1;
                    next_tick = Some(p.start + tick_index as f64 * p.cadence);
                }
            }
            let grow = if en == 0.0 {
                5.0
            } else {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h_try * grow).min(opts.h_max);
        } else {
            h = h_try * (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
            if h < opts.h_min {
                return Propagation {
                    state: y,
                    t,
                    status: Termination::Failed,
                };
            }
        }
    }

    Propagation {
        state: y,
        t,
        status: Termination::Alive,
    }
}

/// Bisect the crossing time within a step known to end inside the surface.
/// Sub-steps are re-integrated from the step start so the located point lies
/// on the integrated path. Returns the last outside state and crossing time.
fn bisect_crossing(
    accel: &dyn Fn(Vector2<f64>, f64) -> Vector2<f64>,
    sdf: &dyn Fn(Vector2<f64>) -> f64,
    t: f64,
    y: &[f64; 4],
    k1: &[f64; 4],
    h: f64,
) -> ([f64; 4], f64) {
    let speed = (y[2] * y[2] + y[3] * y[3]).sqrt().max(1e-6);
    let dt_resolution = CRASH_RESOLUTION / speed;
    let mut lo = 0.0; // known outside (the step start)
    let mut hi = h; // known inside
    let mut y_lo = *y;
    for _ in 0..128 {
        if hi - lo <= dt_resolution {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (y_mid, _, _) = dp45_step(accel, t, y, mid, k1);
        if sdf(Vector2::new(y_mid[0], y_mid[1])) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            y_lo = y_mid;
        }
    }
    (y_lo, t + 0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn no_accel(_: Vector2<f64>, _: f64) -> Vector2<f64> {
        Vector2::zeros()
    }

    fn free_space(_: Vector2<f64>) -> f64 {
        1.0
    }

    fn everywhere(_: Vector2<f64>) -> bool {
        true
    }

    #[test]
    fn straight_line_free_flight() {
        let opts = IntegratorOpts::default();
        let y0 = [0.0, 60e-6, 0.0, -0.51];
        let out = propagate(
            &no_accel,
            &free_space,
            &everywhere,
            &opts,
            y0,
            0.0,
            100e-6,
            None,
            |_, _| {},
        );
        assert_eq!(out.status, Termination::Alive);
        assert!((out.state[1] - (60e-6 - 0.51 * 100e-6)).abs() < 1e-9);
        assert_eq!(out.state[0], 0.0);
    }

    #[test]
    fn harmonic_period_matches_analytic() {
        // omega = 2*pi / 4.4us-ish; measure ten periods via z zero crossings.
        let omega = 1.3e6;
        let accel = move |p: Vector2<f64>, _: f64| Vector2::new(0.0, -omega * omega * p[1]);
        let opts = IntegratorOpts::default();
        let mut crossings: Vec<f64> = Vec::new();
        let mut prev: Option<(f64, [f64; 4])> = None;
        let plan = SamplePlan {
            start: 0.0,
            end: 60e-6,
            cadence: 5e-9,
        };
        propagate(
            &accel,
            &free_space,
            &everywhere,
            &opts,
            [0.0, 30e-9, 0.0, 0.0],
            0.0,
            60e-6,
            Some(&plan),
            |t, y| {
                if let Some((tp, yp)) = prev {
                    if yp[1] > 0.0 && y[1] <= 0.0 {
                        let f = yp[1] / (yp[1] - y[1]);
                        crossings.push(tp + f * (t - tp));
                    }
                }
                prev = Some((t, *y));
            },
        );
        assert!(crossings.len() >= 11, "found {} crossings", crossings.len());
        let period = (crossings[10] - crossings[0]) / 10.0;
        let expected = 2.0 * std::f64::consts::PI / omega;
        assert_relative_eq!(period, expected, max_relative = 1e-4);
    }

    #[test]
    fn energy_conserved_in_harmonic_well() {
        let omega = 1.4e6;
        let accel = move |p: Vector2<f64>, _: f64| -p * (omega * omega);
        let opts = IntegratorOpts::default();
        let y0 = [40e-9, -25e-9, 0.01, -0.02];
        let e = |y: &[f64; 4]| {
            0.5 * (y[2] * y[2] + y[3] * y[3])
                + 0.5 * omega * omega * (y[0] * y[0] + y[1] * y[1])
        };
        let out = propagate(
            &accel,
            &free_space,
            &everywhere,
            &opts,
            y0,
            0.0,
            10e-6,
            None,
            |_, _| {},
        );
        assert_eq!(out.status, Termination::Alive);
        assert_relative_eq!(e(&out.state), e(&y0), max_relative = 1e-6);
    }

    #[test]
    fn crash_localized_to_resolution() {
        // Wall at z = 0, atom flying down from z = 1 um at 0.5 m/s.
        let sdf = |p: Vector2<f64>| p[1];
        let opts = IntegratorOpts::default();
        let out = propagate(
            &no_accel,
            &sdf,
            &everywhere,
            &opts,
            [0.0, 1e-6, 0.0, -0.5],
            0.0,
            10e-6,
            None,
            |_, _| {},
        );
        assert_eq!(out.status, Termination::Crashed);
        assert!(out.state[1] >= 0.0, "final point outside");
        assert!(out.state[1] <= CRASH_RESOLUTION, "z = {}", out.state[1]);
        assert_relative_eq!(out.t, 2e-6, max_relative = 1e-3);
    }

    #[test]
    fn domain_exit_reported() {
        let in_dom = |p: Vector2<f64>| p[1] > -1e-6;
        let opts = IntegratorOpts::default();
        let out = propagate(
            &no_accel,
            &free_space,
            &in_dom,
            &opts,
            [0.0, 0.0, 0.0, -1.0],
            0.0,
            10e-6,
            None,
            |_, _| {},
        );
        assert_eq!(out.status, Termination::Exited);
        assert!(out.t >= 1e-6);
    }

    #[test]
    fn cadence_samples_are_on_ticks() {
        let opts = IntegratorOpts::default();
        let plan = SamplePlan {
            start: 0.0,
            end: 1e-6,
            cadence: 10e-9,
        };
        let mut times = Vec::new();
        propagate(
            &no_accel,
            &free_space,
            &everywhere,
            &opts,
            [0.0, 0.0, 0.0, 0.1],
            0.0,
            1e-6,
            Some(&plan),
            |t, _| times.push(t),
        );
        assert_eq!(times.len(), 101);
        for (i, t) in times.iter().enumerate() {
            assert!((t - i as f64 * 10e-9).abs() < 1e-15);
        }
    }

    #[test]
    fn windowed_sampling_only_inside_window() {
        let opts = IntegratorOpts::default();
        let plan = SamplePlan {
            start: 0.4e-6,
            end: 0.6e-6,
            cadence: 10e-9,
        };
        let mut times = Vec::new();
        propagate(
            &no_accel,
            &free_space,
            &everywhere,
            &opts,
            [0.0, 0.0, 0.0, 0.1],
            0.0,
            1e-6,
            Some(&plan),
            |t, _| times.push(t),
        );
        assert_eq!(times.len(), 21);
        assert!((times[0] - 0.4e-6).abs() < 1e-15);
        assert!((times.last().unwrap() - 0.6e-6).abs() < 1e-15);
    }
}
