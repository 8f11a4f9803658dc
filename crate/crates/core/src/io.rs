//! Output writers.
//!
//! Every artifact is deterministic for a given (config, seed): floats are
//! printed with a fixed `{:.12e}` format, JSON keys are sorted, and each CSV
//! opens with a `# config <sha256>` comment so any file can be traced back to
//! the exact configuration that produced it. JSON documents carry the same
//! hash in a `config_hash` field.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use crate::analysis::FitSeriesEntry;
use crate::clocking::{ClockedSpectrum, TimeTagStream};
use crate::dynamics::{EnsembleSummary, TermStatus, Trajectory};
use crate::optics::SpectrumGrid;
use crate::trapping::CaptureReport;
use crate::units::{to_mhz, to_nm, to_ns, to_um, uk, us};
use crate::Result;

/// Fixed-width float for CSV cells; non-finite values become `nan`.
fn cell(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.12e}")
    } else {
        "nan".into()
    }
}

/// JSON number, or null when non-finite (JSON has no NaN).
fn jnum(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Open a CSV for writing and emit the `# config <hash>` provenance line.
fn csv_file(path: &Path, config_hash: &str) -> Result<BufWriter<File>> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# config {config_hash}")?;
    Ok(w)
}

fn write_json(path: &Path, doc: &Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, doc).map_err(std::io::Error::other)?;
    writeln!(w)?;
    Ok(())
}

/// One row per stored sample (`status` = `alive`), plus one terminal row at
/// `t_final` for atoms that crashed, exited, or failed.
pub fn write_trajectories_csv(
    path: &Path,
    trajectories: &[Trajectory],
    config_hash: &str,
) -> Result<()> {
    let mut w = csv_file(path, config_hash)?;
    writeln!(w, "atom_id,t_ns,y_um,z_um,vy_mps,vz_mps,status,class")?;
    for traj in trajectories {
        let class = traj.class.label();
        for s in &traj.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},alive,{}",
                traj.id,
                cell(to_ns(s.t)),
                cell(to_um(s.pos[0])),
                cell(to_um(s.pos[1])),
                cell(s.vel[0]),
                cell(s.vel[1]),
                class,
            )?;
        }
        if traj.status != TermStatus::Alive {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                traj.id,
                cell(to_ns(traj.t_final)),
                cell(to_um(traj.final_pos[0])),
                cell(to_um(traj.final_pos[1])),
                cell(traj.final_vel[0]),
                cell(traj.final_vel[1]),
                traj.status.label(),
                class,
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Histogram of crash times with 1 us bins: (bin centers in s, counts).
pub fn crash_histogram(trajectories: &[Trajectory]) -> (Vec<f64>, Vec<u64>) {
    let bin = us(1.0);
    let crashes: Vec<f64> = trajectories
        .iter()
        .filter_map(|t| match t.status {
            TermStatus::Crashed { t } => Some(t),
            _ => None,
        })
        .collect();
    let Some(&max) = crashes
        .iter()
        .max_by(|a, b| a.partial_cmp(b).expect("finite crash times"))
    else {
        return (Vec::new(), Vec::new());
    };
    let n_bins = (max / bin).floor() as usize + 1;
    let mut counts = vec![0u64; n_bins];
    for t in &crashes {
        counts[(t / bin).floor() as usize] += 1;
    }
    let centers = (0..n_bins).map(|i| (i as f64 + 0.5) * bin).collect();
    (centers, counts)
}

/// Class and termination counts plus a crash-time histogram.
pub fn write_summary_json(
    path: &Path,
    summary: &EnsembleSummary,
    trajectories: &[Trajectory],
    config_hash: &str,
) -> Result<()> {
    let (centers, counts) = crash_histogram(trajectories);
    let doc = json!({
        "config_hash": config_hash,
        "total": summary.total,
        "class_counts": {
            "center": summary.center,
            "sides": summary.sides,
            "other": summary.other,
        },
        "status_counts": {
            "alive": summary.alive,
            "crashed": summary.crashed,
            "exited": summary.exited,
            "failed": summary.failed,
        },
        "crash_histogram": {
            "bin_width_ns": jnum(to_ns(us(1.0))),
            "t_ns": centers.iter().map(|&t| jnum(to_ns(t))).collect::<Vec<_>>(),
            "counts": counts,
        },
    });
    write_json(path, &doc)
}

/// Transmission matrix: header row `t_ns` + detunings (MHz), one row per
/// snapshot time with the time stamp (ns) in the first column.
pub fn write_spectrum_csv(path: &Path, grid: &SpectrumGrid, config_hash: &str) -> Result<()> {
    let mut w = csv_file(path, config_hash)?;
    let header: Vec<String> = std::iter::once("t_ns".to_string())
        .chain(grid.detunings.iter().map(|&d| cell(to_mhz(d))))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (ti, &t) in grid.times.iter().enumerate() {
        let mut row = Vec::with_capacity(grid.detunings.len() + 1);
        row.push(cell(to_ns(t)));
        for di in 0..grid.detunings.len() {
            row.push(cell(grid.value(ti, di)));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum_meta_json(
    path: &Path,
    grid: &SpectrumGrid,
    seed: u64,
    config_hash: &str,
) -> Result<()> {
    let (min_ti, min_di, min_t) = grid.min_transmission();
    let doc = json!({
        "config_hash": config_hash,
        "seed": seed,
        "times": grid.times.len(),
        "detunings": grid.detunings.len(),
        "coupled_per_time": grid.coupled,
        "min_transmission": {
            "t_ns": jnum(grid.times.get(min_ti).map_or(f64::NAN, |&t| to_ns(t))),
            "detuning_mhz": jnum(grid.detunings.get(min_di).map_or(f64::NAN, |&d| to_mhz(d))),
            "value": jnum(min_t),
        },
    });
    write_json(path, &doc)
}

/// Merged detector record: `channel` is `probe` or `sync`, ordered by time.
pub fn write_tags_csv(path: &Path, tags: &TimeTagStream, config_hash: &str) -> Result<()> {
    let mut events: Vec<(f64, &str)> = tags
        .probe
        .iter()
        .map(|&t| (t, "probe"))
        .chain(tags.sync.iter().map(|&t| (t, "sync")))
        .collect();
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite tag times"));
    let mut w = csv_file(path, config_hash)?;
    writeln!(w, "channel,time_ns")?;
    for (t, channel) in events {
        writeln!(w, "{},{}", channel, cell(to_ns(t)))?;
    }
    w.flush()?;
    Ok(())
}

/// Analog fringe monitor samples.
pub fn write_fringe_csv(path: &Path, fringe: &[(f64, f64)], config_hash: &str) -> Result<()> {
    let mut w = csv_file(path, config_hash)?;
    writeln!(w, "time_ns,value")?;
    for &(t, v) in fringe {
        writeln!(w, "{},{}", cell(to_ns(t)), cell(v))?;
    }
    w.flush()?;
    Ok(())
}

fn write_clocked_matrix(
    path: &Path,
    spec: &ClockedSpectrum,
    config_hash: &str,
    value: impl Fn(usize, usize) -> f64,
) -> Result<()> {
    let mut w = csv_file(path, config_hash)?;
    let header: Vec<String> = std::iter::once("t_ns".to_string())
        .chain(spec.detunings.iter().map(|&d| cell(to_mhz(d))))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let width = spec.bin_width();
    for b in 0..spec.bins {
        let mut row = Vec::with_capacity(spec.detunings.len() + 1);
        row.push(cell(to_ns((b as f64 + 0.5) * width)));
        for d in 0..spec.detunings.len() {
            row.push(cell(if spec.is_valid(d, b) {
                value(d, b)
            } else {
                f64::NAN
            }));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Normalized transmission folded on the lattice period: header row `t_ns` +
/// detunings (MHz), one row per folded bin with the bin center (ns) first.
pub fn write_clocked_csv(path: &Path, spec: &ClockedSpectrum, config_hash: &str) -> Result<()> {
    write_clocked_matrix(path, spec, config_hash, |d, b| spec.value(d, b))
}

/// Per-bin 1-sigma uncertainties, same layout as the value matrix.
pub fn write_clocked_sigma_csv(
    path: &Path,
    spec: &ClockedSpectrum,
    config_hash: &str,
) -> Result<()> {
    write_clocked_matrix(path, spec, config_hash, |d, b| spec.sigma(d, b))
}

pub fn write_align_json(
    path: &Path,
    method: &str,
    estimated_offset: f64,
    applied_offset: f64,
    config_hash: &str,
) -> Result<()> {
    let doc = json!({
        "config_hash": config_hash,
        "method": method,
        "estimated_offset_ns": jnum(to_ns(estimated_offset)),
        "applied_offset_ns": jnum(to_ns(applied_offset)),
    });
    write_json(path, &doc)
}

/// Effective-model parameters per folded-time slice. Slices without a fit
/// keep their row with `nan` values and status `gap`.
pub fn write_fit_csv(path: &Path, series: &[FitSeriesEntry], config_hash: &str) -> Result<()> {
    let mut w = csv_file(path, config_hash)?;
    writeln!(
        w,
        "t_ns,gamma_eff_mhz,gamma_eff_sigma_mhz,j_mhz,j_sigma_mhz,\
         gamma_prime_mhz,gamma_prime_sigma_mhz,delta_ac_mhz,delta_ac_sigma_mhz,\
         redchi2,status"
    )?;
    for entry in series {
        let t = cell(to_ns(entry.time));
        match &entry.fit {
            Some(fit) => writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                t,
                cell(to_mhz(fit.params.gamma_eff)),
                cell(to_mhz(fit.sigma.gamma_eff)),
                cell(to_mhz(fit.params.j_eff)),
                cell(to_mhz(fit.sigma.j_eff)),
                cell(to_mhz(fit.params.gamma_prime)),
                cell(to_mhz(fit.sigma.gamma_prime)),
                cell(to_mhz(fit.params.delta_ac)),
                cell(to_mhz(fit.sigma.delta_ac)),
                cell(fit.red_chi2),
                fit.status.label(),
            )?,
            None => writeln!(w, "{t},nan,nan,nan,nan,nan,nan,nan,nan,nan,gap")?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Capture Monte-Carlo outcome: counts, captured fraction with its Wilson
/// interval, the barrier used, and the trap minimum when one was computed.
pub fn write_capture_json(path: &Path, report: &CaptureReport, config_hash: &str) -> Result<()> {
    let trap = report.trap.as_ref().map_or(Value::Null, |t| {
        json!({
            "y_nm": jnum(to_nm(t.position[0])),
            "z_nm": jnum(to_nm(t.position[1])),
            "value_uk": jnum(t.value / uk(1.0)),
            "depth_uk": jnum(t.depth / uk(1.0)),
            "frequencies_khz": [
                jnum(t.frequencies[0] / (2.0 * std::f64::consts::PI * 1e3)),
                jnum(t.frequencies[1] / (2.0 * std::f64::consts::PI * 1e3)),
            ],
        })
    });
    let doc = json!({
        "config_hash": config_hash,
        "total": report.total,
        "pumped": report.pumped,
        "to_f3": report.to_f3,
        "captured": report.captured,
        "fraction": jnum(report.fraction),
        "ci95": [jnum(report.ci.0), jnum(report.ci.1)],
        "barrier_uk": jnum(report.barrier / uk(1.0)),
        "trap": trap,
    });
    write_json(path, &doc)
}

/// Run manifest: what ran, on which configuration, what it produced, and how
/// it ended. Written last on success and on failure, so no output is ever
/// left unaccounted for.
#[allow(clippy::too_many_arguments)]
pub fn write_manifest(
    path: &Path,
    subcommand: &str,
    config_hash: &str,
    seed: u64,
    wall_s: f64,
    status: &str,
    error: Option<&str>,
    outputs: &[String],
) -> Result<()> {
    let doc = json!({
        "subcommand": subcommand,
        "config_hash": config_hash,
        "seed": seed,
        "versions": {
            "apcw-core": env!("CARGO_PKG_VERSION"),
        },
        "wall_s": jnum(wall_s),
        "status": status,
        "error": error.map_or(Value::Null, |e| Value::String(e.into())),
        "outputs": outputs,
    });
    write_json(path, &doc)
}
