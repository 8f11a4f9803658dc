//! Run orchestration: chain the simulation stages behind one entry point.
//!
//! Stages share a single [`RunConfig`]: transport trajectories feed the
//! time-resolved spectrum, the spectrum feeds the synthetic detector records
//! and their clocked fold, the fold feeds the effective-model fits, and the
//! capture Monte Carlo stands alone on the two-color trap. [`run`] dispatches
//! one subcommand, writes its artifacts, and always leaves a manifest behind
//! — on success and on failure alike — listing every file it touched.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::analysis::{fit_timeseries, FitBounds, FitSeriesEntry};
use crate::clocking::{
    align_min_od, align_xcorr, fold, simulate_counts, ClockedHistogram, ClockedSpectrum,
    TimeTagStream, CLOCK_STREAM_BASE,
};
use crate::config::RunConfig;
use crate::dynamics::{
    integrate_ensemble, sample_ensemble, summarize, ClassifyParams, EnsembleSummary, Trajectory,
};
use crate::fields::{Level, PotentialStack};
use crate::io;
use crate::optics::{spectrum_grid, SpectrumGrid};
use crate::trapping::{capture_monte_carlo, thermal_cloud, CaptureReport};
use crate::units::{mhz, nm, uk, us};
use crate::{Error, Result};

/// Fringe contrast floor below which cross-correlation alignment refuses to
/// report an offset.
const XCORR_CONTRAST_FLOOR: f64 = 0.1;

/// The spectrum window: an integer number of lattice periods, sampled
/// uniformly, starting on a whole-period boundary of the acquisition clock so
/// folded bins line up with lattice phase.
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    /// Window start (s), a whole multiple of `period`.
    pub start: f64,
    /// Whole lattice periods covered.
    pub periods: usize,
    /// Samples per period; the grid has `periods * samples_per_period + 1`
    /// points so the span is exactly `periods * period`.
    pub samples_per_period: usize,
    /// Lattice period (s).
    pub period: f64,
}

impl TimeGrid {
    /// Derive the window from the configuration. With `window_start_us < 0`
    /// the start comes from the arrival time of the deepest pancake, with one
    /// period of lead; with `window_periods = 0` the span covers the whole
    /// train plus settling margin.
    pub fn from_config(cfg: &RunConfig, stack: &PotentialStack) -> Result<TimeGrid> {
        let lattice = stack.lattice.as_ref().ok_or_else(|| {
            Error::Config(vec![
                "lattice.enabled: the clocked analysis needs the transport lattice".into(),
            ])
        })?;
        let period = lattice.period();
        let start = if cfg.clock.window_start_us >= 0.0 {
            let k = (us(cfg.clock.window_start_us) / period).round().max(0.0);
            k * period
        } else {
            let deepest = crate::units::um(cfg.ensemble.launch_z_um)
                - cfg.ensemble.pancakes as f64 * lattice.pancake_spacing();
            let arrival = deepest.max(0.0) / lattice.antinode_speed();
            (((arrival / period).floor() - 1.0).max(0.0)) * period
        };
        let periods = if cfg.clock.window_periods > 0 {
            cfg.clock.window_periods
        } else {
            cfg.ensemble.pancakes + 4
        };
        let grid = TimeGrid {
            start,
            periods,
            samples_per_period: cfg.clock.samples_per_period,
            period,
        };
        if grid.end() > us(cfg.propagation.t_end_us) + 1e-12 {
            return Err(Error::Config(vec![format!(
                "propagation.t_end_us: {} us ends before the spectrum window does \
                 ({:.3} us); extend it or shrink clock.window_periods",
                cfg.propagation.t_end_us,
                grid.end() * 1e6
            )]));
        }
        Ok(grid)
    }

    pub fn end(&self) -> f64 {
        self.start + self.periods as f64 * self.period
    }

    /// Snapshot times, inclusive of both endpoints.
    pub fn times(&self) -> Vec<f64> {
        let dt = self.period / self.samples_per_period as f64;
        (0..=self.periods * self.samples_per_period)
            .map(|i| self.start + i as f64 * dt)
            .collect()
    }

    /// Trajectory sampling window with enough margin to interpolate at both
    /// grid endpoints.
    pub fn sampling_window(&self, cadence: f64) -> (f64, f64) {
        ((self.start - 2.0 * cadence).max(0.0), self.end() + 2.0 * cadence)
    }
}

/// Transport stage output.
pub struct TrajectoryStage {
    pub trajectories: Vec<Trajectory>,
    pub summary: EnsembleSummary,
}

/// Sample the launch ensemble and integrate it through the stack. `window`
/// limits which part of each trajectory is recorded, not how far it runs.
pub fn compute_trajectories(
    cfg: &RunConfig,
    stack: &PotentialStack,
    window: Option<(f64, f64)>,
) -> Result<TrajectoryStage> {
    let atoms = sample_ensemble(&cfg.ensemble_spec(), stack)?;
    let mut spec = cfg.propagation_spec();
    spec.window = window;
    let classify = ClassifyParams::from_geometry(&stack.geometry);
    let trajectories = integrate_ensemble(&atoms, stack, &spec, &classify);
    let summary = summarize(&trajectories);
    Ok(TrajectoryStage {
        trajectories,
        summary,
    })
}

/// Time-resolved transmission over the window.
pub fn compute_spectrum(
    cfg: &RunConfig,
    stack: &PotentialStack,
    trajectories: &[Trajectory],
    times: &[f64],
) -> Result<SpectrumGrid> {
    spectrum_grid(trajectories, times, &cfg.probe_config(), stack, cfg.seed)
}

/// Clocked stage output: the folded, normalized, aligned spectrum plus the
/// raw detector record of one sample channel.
pub struct ClockfoldStage {
    pub spectrum: ClockedSpectrum,
    /// Full detector record of the channel nearest the probe center.
    pub sample_tags: TimeTagStream,
    /// Detuning (rad/s) of the sample channel.
    pub sample_detuning: f64,
    /// Alignment method actually applied.
    pub method: String,
    /// Offset the method estimated (s); zero for `none`.
    pub estimated_offset: f64,
}

/// Synthesize one detector record per detuning channel (atoms and no-atoms
/// reference), fold both on the sync markers, normalize, and align.
pub fn compute_clockfold(cfg: &RunConfig, grid: &SpectrumGrid) -> Result<ClockfoldStage> {
    let sim = cfg.clock_sim();
    let bins = cfg.clock.bins;
    let n_det = grid.detunings.len();
    let n_times = grid.times.len();
    let center = mhz(cfg.probe.center_mhz);
    let sample_idx = grid
        .detunings
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - center)
                .abs()
                .partial_cmp(&(b.1 - center).abs())
                .expect("finite detunings")
        })
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Numerical("clocked fold needs at least one detuning".into()))?;

    let reference_tile = vec![1.0; n_times];
    type Channel = ((ClockedHistogram, ClockedHistogram), Option<TimeTagStream>);
    let channels: Result<Vec<Channel>> = (0..n_det)
        .into_par_iter()
        .map(|d| {
            let tile: Vec<f64> = (0..n_times).map(|ti| grid.value(ti, d)).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(CLOCK_STREAM_BASE + d as u64);
            let atoms = simulate_counts(&grid.times, &tile, &sim, &mut rng)?;
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            rng.set_stream(CLOCK_STREAM_BASE + 10_000 + d as u64);
            let reference = simulate_counts(&grid.times, &reference_tile, &sim, &mut rng)?;
            let folded_atoms = fold(&atoms.probe, &atoms.sync, bins)?;
            let folded_ref = fold(&reference.probe, &reference.sync, bins)?;
            let keep = (d == sample_idx).then_some(atoms);
            Ok(((folded_atoms, folded_ref), keep))
        })
        .collect();
    let channels = channels?;

    let mut pairs = Vec::with_capacity(n_det);
    let mut sample_tags = None;
    for (pair, keep) in channels {
        pairs.push(pair);
        if let Some(tags) = keep {
            sample_tags = Some(tags);
        }
    }
    let sample_tags = sample_tags.expect("sample channel folded");
    let spectrum = ClockedSpectrum::assemble(grid.detunings.clone(), &pairs)?;

    let (method, estimated_offset, spectrum) = match cfg.clock.align.as_str() {
        "min_od" => {
            let offset = align_min_od(&spectrum)?;
            ("min_od", offset, spectrum.rotate(offset))
        }
        "xcorr" => {
            let offset = align_xcorr(
                &sample_tags.probe,
                &sample_tags.fringe,
                sim.period,
                bins,
                XCORR_CONTRAST_FLOOR,
            )?;
            ("xcorr", offset, spectrum.rotate(offset))
        }
        _ => ("none", 0.0, spectrum),
    };

    Ok(ClockfoldStage {
        spectrum,
        sample_tags,
        sample_detuning: grid.detunings[sample_idx],
        method: method.into(),
        estimated_offset,
    })
}

/// Effective-model fit per folded-time slice.
pub fn compute_fit(cfg: &RunConfig, clocked: &ClockedSpectrum) -> Result<Vec<FitSeriesEntry>> {
    fit_timeseries(
        clocked,
        cfg.fit.combine_bins,
        cfg.fit.warm_start,
        &FitBounds::default(),
    )
}

/// Two-color trap capture Monte Carlo on a thermal cloud seeded at the F4
/// minimum.
pub fn compute_capture(cfg: &RunConfig) -> Result<CaptureReport> {
    let trap = cfg.trap();
    let f4 = trap.find_minimum(Level::F4)?;
    let atoms = thermal_cloud(
        cfg.capture.atoms,
        f4.position,
        nm(cfg.capture.spread_y_nm),
        nm(cfg.capture.spread_z_nm),
        cfg.capture.temperature_uk * 1e-6,
        cfg.seed,
    );
    let mut capture_cfg = cfg.capture_config();
    if cfg.capture.barrier_override_uk >= 0.0 {
        let f3 = trap.find_minimum(Level::F3)?;
        capture_cfg.barrier_override = Some(f3.value + uk(cfg.capture.barrier_override_uk));
    }
    capture_monte_carlo(&trap, &atoms, &capture_cfg)
}

/// What to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Trajectories,
    Spectrum,
    Clockfold,
    Fit,
    Capture,
    Pipeline,
}

impl Subcommand {
    pub fn label(&self) -> &'static str {
        match self {
            Subcommand::Trajectories => "trajectories",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Clockfold => "clockfold",
            Subcommand::Fit => "fit",
            Subcommand::Capture => "capture",
            Subcommand::Pipeline => "pipeline",
        }
    }
}

/// Track artifacts as they are created so the manifest can list every file,
/// including partial ones left behind by a failure.
struct Artifacts<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }
}

/// Validate, run one subcommand, and write its artifacts plus a manifest.
///
/// An invalid configuration aborts before anything is created. After that
/// point a manifest is always written, recording status, wall time, and the
/// artifact list.
pub fn run(sub: Subcommand, cfg: &RunConfig, outdir: &Path) -> Result<()> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    std::fs::create_dir_all(outdir)?;
    let hash = cfg.hash();
    let clock = Instant::now();
    let mut artifacts = Artifacts {
        dir: outdir,
        names: Vec::new(),
    };
    let outcome = execute(sub, cfg, &hash, &mut artifacts);
    let wall = clock.elapsed().as_secs_f64();
    let (status, error) = match &outcome {
        Ok(()) => ("ok", None),
        Err(e) => ("error", Some(e.to_string())),
    };
    io::write_manifest(
        &outdir.join("manifest.json"),
        sub.label(),
        &hash,
        cfg.seed,
        wall,
        status,
        error.as_deref(),
        &artifacts.names,
    )?;
    outcome
}

fn execute(
    sub: Subcommand,
    cfg: &RunConfig,
    hash: &str,
    artifacts: &mut Artifacts,
) -> Result<()> {
    if sub == Subcommand::Capture {
        let report = compute_capture(cfg)?;
        return io::write_capture_json(&artifacts.path("capture.json"), &report, hash);
    }

    let stack = cfg.stack()?;

    if sub == Subcommand::Trajectories {
        let stage = compute_trajectories(cfg, &stack, None)?;
        io::write_trajectories_csv(
            &artifacts.path("trajectories.csv"),
            &stage.trajectories,
            hash,
        )?;
        return io::write_summary_json(
            &artifacts.path("summary.json"),
            &stage.summary,
            &stage.trajectories,
            hash,
        );
    }

    let grid = TimeGrid::from_config(cfg, &stack)?;
    let window = grid.sampling_window(cfg.propagation_spec().cadence);
    let stage = compute_trajectories(cfg, &stack, Some(window))?;
    if sub == Subcommand::Pipeline {
        io::write_summary_json(
            &artifacts.path("summary.json"),
            &stage.summary,
            &stage.trajectories,
            hash,
        )?;
    }

    let spectrum = compute_spectrum(cfg, &stack, &stage.trajectories, &grid.times())?;
    if matches!(sub, Subcommand::Spectrum | Subcommand::Pipeline) {
        io::write_spectrum_csv(&artifacts.path("spectrum.csv"), &spectrum, hash)?;
        io::write_spectrum_meta_json(
            &artifacts.path("spectrum_meta.json"),
            &spectrum,
            cfg.seed,
            hash,
        )?;
        if sub == Subcommand::Spectrum {
            return Ok(());
        }
    }

    let clocked = compute_clockfold(cfg, &spectrum)?;
    if matches!(sub, Subcommand::Clockfold | Subcommand::Pipeline) {
        io::write_clocked_csv(&artifacts.path("clocked.csv"), &clocked.spectrum, hash)?;
        io::write_clocked_sigma_csv(
            &artifacts.path("clocked_sigma.csv"),
            &clocked.spectrum,
            hash,
        )?;
        io::write_tags_csv(&artifacts.path("tags.csv"), &clocked.sample_tags, hash)?;
        io::write_fringe_csv(
            &artifacts.path("fringe.csv"),
            &clocked.sample_tags.fringe,
            hash,
        )?;
        io::write_align_json(
            &artifacts.path("align.json"),
            &clocked.method,
            clocked.estimated_offset,
            clocked.spectrum.applied_offset,
            hash,
        )?;
        if sub == Subcommand::Clockfold {
            return Ok(());
        }
    }

    let series = compute_fit(cfg, &clocked.spectrum)?;
    io::write_fit_csv(&artifacts.path("fit.csv"), &series, hash)
}
