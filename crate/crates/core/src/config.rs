//! Declarative run configuration.
//!
//! One TOML file describes a full run. Sections mirror the simulation
//! modules, every dimensioned key carries its unit in its name, and
//! validation reports every violation at once, each message starting with
//! the dotted path of the offending field. Command-line overrides are
//! dotted paths too (`ensemble.pancakes=3`) and are folded into the
//! document before deserialization, so the canonical form — and the SHA-256
//! hash embedded in every output — covers exactly what the run used.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clocking::ClockSim;
use crate::constants::{Transitions, CS_D2_GAMMA};
use crate::dynamics::integrator::IntegratorOpts;
use crate::dynamics::{EnsembleSpec, PropagationSpec};
use crate::fields::{
    CpParams, Domain, GapStyle, Geometry2D, GmField, GmMode, Level, Polarization,
    PotentialStack, RefLine,
};
use crate::optics::ProbeConfig;
use crate::trapping::{CaptureConfig, TwoColorTrap};
use crate::units::{ghz, mhz, nm, ns, uk, um, us, uw};
use crate::{Error, Result};

/// Complete declarative description of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random draw derives its stream from it.
    pub seed: u64,
    /// Output directory, creatable relative to the working directory.
    pub output: String,
    pub geometry: GeometrySection,
    pub domain: DomainSection,
    pub transitions: TransitionsSection,
    pub lattice: LatticeSection,
    pub ensemble: EnsembleSection,
    pub propagation: PropagationSection,
    /// Additional guided-mode beams present during transport.
    pub stark: Vec<GmSection>,
    pub cp: CpSection,
    pub probe: ProbeSection,
    pub clock: ClockSection,
    pub fit: FitSection,
    pub capture: CaptureSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output: "runs/out".into(),
            geometry: GeometrySection::default(),
            domain: DomainSection::default(),
            transitions: TransitionsSection::default(),
            lattice: LatticeSection::default(),
            ensemble: EnsembleSection::default(),
            propagation: PropagationSection::default(),
            stark: Vec::new(),
            cp: CpSection::default(),
            probe: ProbeSection::default(),
            clock: ClockSection::default(),
            fit: FitSection::default(),
            capture: CaptureSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub gap_nm: f64,
    pub beam_width_nm: f64,
    pub thickness_nm: f64,
    pub unit_cell_nm: f64,
    pub length_cells: usize,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let g = Geometry2D::default();
        GeometrySection {
            gap_nm: g.gap * 1e9,
            beam_width_nm: g.beam_width * 1e9,
            thickness_nm: g.thickness * 1e9,
            unit_cell_nm: g.unit_cell * 1e9,
            length_cells: g.length_cells,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub y_half_um: f64,
    pub z_min_um: f64,
    pub z_max_um: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection {
            y_half_um: 25.0,
            z_min_um: -10.0,
            z_max_um: 70.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionsSection {
    /// Excited-state light shift as a ratio of the ground shift; -1.5 gives
    /// the usual anti-trapped excited state, 1.0 a magic (shift-free) probe.
    pub excited_shift_ratio: f64,
}

impl Default for TransitionsSection {
    fn default() -> Self {
        TransitionsSection {
            excited_shift_ratio: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub enabled: bool,
    pub wavelength_nm: f64,
    pub waist_um: f64,
    pub depth_uk: f64,
    /// Arm frequency difference (MHz, ordinary frequency).
    pub chirp_mhz: f64,
    pub detuning_d2_ghz: f64,
    pub phase_rad: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        LatticeSection {
            enabled: true,
            wavelength_nm: 852.0,
            waist_um: 60.0,
            depth_uk: 300.0,
            chirp_mhz: 1.2,
            detuning_d2_ghz: -800.0,
            phase_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub atoms_per_pancake: usize,
    pub pancakes: usize,
    pub temperature_uk: f64,
    pub launch_z_um: f64,
    pub level: Level,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            atoms_per_pancake: 500,
            pancakes: 5,
            temperature_uk: 20.0,
            launch_z_um: 60.0,
            level: Level::F3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationSection {
    pub t_end_us: f64,
    pub cadence_ns: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for PropagationSection {
    fn default() -> Self {
        let opts = IntegratorOpts::default();
        PropagationSection {
            t_end_us: 130.0,
            cadence_ns: 50.0,
            rtol: opts.rtol,
            atol: opts.atol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmSection {
    pub polarization: Polarization,
    pub power_uw: f64,
    pub mode_area_um2: f64,
    pub detuning_ghz: f64,
    pub reference: RefLine,
    pub kappa_inv_nm: f64,
    pub axial_contrast: f64,
    /// "plateau", "two_wall", or "confined".
    pub gap_style: String,
    /// z waist (nm) when `gap_style = "confined"`.
    pub z_waist_nm: f64,
    pub scale_f3: f64,
    pub scale_f4: f64,
}

impl Default for GmSection {
    fn default() -> Self {
        GmSection {
            polarization: Polarization::TM,
            power_uw: 10.0,
            mode_area_um2: 0.3,
            detuning_ghz: 58.0,
            reference: RefLine::D2,
            // Band-edge evanescent decay 1/sqrt((pi/a)^2 - (2 pi/lambda)^2)
            // for a = 370 nm at 852 nm.
            kappa_inv_nm: 238.0,
            axial_contrast: 0.0,
            gap_style: "plateau".into(),
            z_waist_nm: 300.0,
            scale_f3: 1.0,
            scale_f4: 1.0,
        }
    }
}

impl GmSection {
    fn gap_style(&self) -> Option<GapStyle> {
        match self.gap_style.as_str() {
            "plateau" => Some(GapStyle::Plateau),
            "two_wall" => Some(GapStyle::TwoWall),
            "confined" => Some(GapStyle::Confined {
                z_waist: nm(self.z_waist_nm),
            }),
            _ => None,
        }
    }

    fn mode(&self) -> GmMode {
        GmMode {
            polarization: self.polarization,
            power: uw(self.power_uw),
            mode_area: self.mode_area_um2 * 1e-12,
            detuning: ghz(self.detuning_ghz),
            reference: self.reference,
            kappa_inv: nm(self.kappa_inv_nm),
            axial_contrast: self.axial_contrast,
            gap_style: self.gap_style().unwrap_or(GapStyle::Plateau),
            profile_grid: None,
            scale_f3: self.scale_f3,
            scale_f4: self.scale_f4,
        }
    }

    fn check(&self, path: &str, v: &mut Vec<String>) {
        if !(self.power_uw >= 0.0) {
            v.push(format!("{path}.power_uw: must be >= 0, got {}", self.power_uw));
        }
        if !(self.mode_area_um2 > 0.0) {
            v.push(format!(
                "{path}.mode_area_um2: must be > 0, got {}",
                self.mode_area_um2
            ));
        }
        if self.detuning_ghz == 0.0 {
            v.push(format!("{path}.detuning_ghz: must be nonzero"));
        }
        if !(self.kappa_inv_nm > 0.0) {
            v.push(format!(
                "{path}.kappa_inv_nm: must be > 0, got {}",
                self.kappa_inv_nm
            ));
        }
        if !(0.0..=1.0).contains(&self.axial_contrast) {
            v.push(format!(
                "{path}.axial_contrast: must be in [0, 1], got {}",
                self.axial_contrast
            ));
        }
        if self.gap_style().is_none() {
            v.push(format!(
                "{path}.gap_style: expected plateau, two_wall, or confined, got {:?}",
                self.gap_style
            ));
        }
        if !(self.z_waist_nm > 0.0) {
            v.push(format!(
                "{path}.z_waist_nm: must be > 0, got {}",
                self.z_waist_nm
            ));
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CpSection {
    pub enabled: bool,
    /// Ground-state van der Waals coefficient (J m^3).
    pub c3_ground: f64,
    /// Excited-state coefficient (J m^3).
    pub c3_excited: f64,
}

impl Default for CpSection {
    fn default() -> Self {
        CpSection {
            enabled: true,
            c3_ground: 6.626e-49,
            c3_excited: 1.3252e-48,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub polarization: Polarization,
    pub kappa_inv_nm: f64,
    pub axial_contrast: f64,
    pub gap_style: String,
    pub z_waist_nm: f64,
    /// Detuning grid: `points` values spanning `center ± span`.
    pub center_mhz: f64,
    pub span_mhz: f64,
    pub points: usize,
    /// Peak guided decay rate as a multiple of the D2 linewidth.
    pub gamma_1d_peak_ratio: f64,
    /// Non-guided decay rate as a multiple of the D2 linewidth.
    pub gamma_prime_ratio: f64,
    pub n_eff: f64,
    pub coupling_cutoff: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            polarization: Polarization::TE,
            // Band-edge evanescent decay 1/sqrt((pi/a)^2 - (2 pi/lambda)^2)
            // for a = 370 nm at the 895 nm probe line.
            kappa_inv_nm: 210.0,
            axial_contrast: 1.0,
            gap_style: "plateau".into(),
            z_waist_nm: 300.0,
            center_mhz: 0.0,
            span_mhz: 20.0,
            points: 40,
            gamma_1d_peak_ratio: 0.5,
            gamma_prime_ratio: 1.0,
            n_eff: 1.7,
            coupling_cutoff: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClockSection {
    /// Unobstructed probe count rate (counts/s).
    pub rate_hz: f64,
    pub dark_rate_hz: f64,
    /// Synthetic record length (s).
    pub duration_s: f64,
    /// Injected lattice-vs-acquisition clock offset (ns).
    pub offset_ns: f64,
    /// Gaussian sync jitter (ns).
    pub jitter_ns: f64,
    pub fringe_contrast: f64,
    /// Folded bins per lattice period.
    pub bins: usize,
    /// Transmission-tile samples per lattice period.
    pub samples_per_period: usize,
    /// Spectrum window start (us); negative = derive from the ensemble.
    pub window_start_us: f64,
    /// Whole lattice periods in the window; 0 = derive from the ensemble.
    pub window_periods: usize,
    /// "min_od", "xcorr", or "none".
    pub align: String,
}

impl Default for ClockSection {
    fn default() -> Self {
        ClockSection {
            rate_hz: 2e5,
            dark_rate_hz: 0.0,
            duration_s: 0.5,
            offset_ns: 0.0,
            jitter_ns: 0.0,
            fringe_contrast: 0.7,
            bins: 50,
            samples_per_period: 40,
            window_start_us: -1.0,
            window_periods: 0,
            align: "min_od".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    /// Folded bins combined per fitted slice.
    pub combine_bins: usize,
    /// Seed each slice with the previous slice's parameters.
    pub warm_start: bool,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            combine_bins: 1,
            warm_start: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureSection {
    pub atoms: usize,
    pub temperature_uk: f64,
    /// Cloud position spread around the F4 minimum (nm).
    pub spread_y_nm: f64,
    pub spread_z_nm: f64,
    pub trigger_us: f64,
    pub beta: f64,
    /// Pump selectivity band on the local Stark shift (GHz).
    pub shift_window_ghz: (f64, f64),
    /// Replace the computed F3 barrier (uK above the F3 minimum); negative
    /// disables the override.
    pub barrier_override_uk: f64,
    pub blue_power_uw: f64,
    pub blue_detuning_ghz: f64,
    pub blue_kappa_inv_nm: f64,
    pub blue_z_waist_nm: f64,
    pub red_power_uw: f64,
    pub red_detuning_ghz: f64,
    pub red_kappa_inv_nm: f64,
    pub red_z_waist_nm: f64,
    pub red_scale_f4: f64,
}

impl Default for CaptureSection {
    fn default() -> Self {
        CaptureSection {
            atoms: 400,
            temperature_uk: 20.0,
            spread_y_nm: 8.0,
            spread_z_nm: 15.0,
            trigger_us: 0.5,
            beta: 0.5,
            shift_window_ghz: (-1000.0, 1000.0),
            barrier_override_uk: -1.0,
            blue_power_uw: 15.0,
            blue_detuning_ghz: 60.0,
            blue_kappa_inv_nm: 90.0,
            blue_z_waist_nm: 350.0,
            red_power_uw: 79.0,
            red_detuning_ghz: -600.0,
            red_kappa_inv_nm: 200.0,
            red_z_waist_nm: 250.0,
            red_scale_f4: 0.55,
        }
    }
}

impl RunConfig {
    /// Load a TOML file and fold in `path=value` overrides.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides)
    }

    /// Parse TOML text and fold in `path=value` overrides.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
        let mut doc: toml::Value = text
            .parse()
            .map_err(|e| Error::Config(vec![format!("config parse: {e}")]))?;
        for (path, raw) in overrides {
            apply_override(&mut doc, path, raw)?;
        }
        doc.try_into()
            .map_err(|e| Error::Config(vec![format!("config schema: {e}")]))
    }

    /// SHA-256 of the canonical (re-serialized) form, lowercase hex.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every violation, each message starting with the field's dotted path.
    /// Empty means the configuration is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let pos = |v: &mut Vec<String>, path: &str, x: f64| {
            if !(x > 0.0) {
                v.push(format!("{path}: must be > 0, got {x}"));
            }
        };
        let nonneg = |v: &mut Vec<String>, path: &str, x: f64| {
            if !(x >= 0.0) {
                v.push(format!("{path}: must be >= 0, got {x}"));
            }
        };

        pos(&mut v, "geometry.gap_nm", self.geometry.gap_nm);
        pos(&mut v, "geometry.beam_width_nm", self.geometry.beam_width_nm);
        pos(&mut v, "geometry.thickness_nm", self.geometry.thickness_nm);
        pos(&mut v, "geometry.unit_cell_nm", self.geometry.unit_cell_nm);
        if self.geometry.length_cells == 0 {
            v.push("geometry.length_cells: must be >= 1, got 0".into());
        }

        pos(&mut v, "domain.y_half_um", self.domain.y_half_um);
        if !(self.domain.z_max_um > self.domain.z_min_um) {
            v.push(format!(
                "domain.z_max_um: must exceed z_min_um, got {} <= {}",
                self.domain.z_max_um, self.domain.z_min_um
            ));
        }

        if !self.transitions.excited_shift_ratio.is_finite() {
            v.push(format!(
                "transitions.excited_shift_ratio: must be finite, got {}",
                self.transitions.excited_shift_ratio
            ));
        }

        if self.lattice.enabled {
            pos(&mut v, "lattice.wavelength_nm", self.lattice.wavelength_nm);
            pos(&mut v, "lattice.waist_um", self.lattice.waist_um);
            nonneg(&mut v, "lattice.depth_uk", self.lattice.depth_uk);
            pos(&mut v, "lattice.chirp_mhz", self.lattice.chirp_mhz);
            if self.lattice.detuning_d2_ghz == 0.0 {
                v.push("lattice.detuning_d2_ghz: must be nonzero".into());
            }
        }

        if self.ensemble.atoms_per_pancake == 0 {
            v.push("ensemble.atoms_per_pancake: must be >= 1, got 0".into());
        }
        if self.ensemble.pancakes == 0 {
            v.push("ensemble.pancakes: must be >= 1, got 0".into());
        }
        pos(&mut v, "ensemble.temperature_uk", self.ensemble.temperature_uk);
        let spacing_um = self.lattice.wavelength_nm * 1e-3 / 2.0;
        let bottom_um =
            self.ensemble.launch_z_um - (self.ensemble.pancakes as f64 + 1.0) * spacing_um;
        if bottom_um < 1.0 {
            v.push(format!(
                "ensemble.launch_z_um: pancake train must start at least 1 um above the \
                 device, lowest well sits at {bottom_um:.3} um"
            ));
        }
        if self.ensemble.launch_z_um >= self.domain.z_max_um {
            v.push(format!(
                "ensemble.launch_z_um: {} um is outside the domain (z_max {} um)",
                self.ensemble.launch_z_um, self.domain.z_max_um
            ));
        }
        if self.ensemble.level == Level::Excited {
            v.push("ensemble.level: atoms launch in a ground manifold (F3 or F4)".into());
        }

        pos(&mut v, "propagation.t_end_us", self.propagation.t_end_us);
        pos(&mut v, "propagation.cadence_ns", self.propagation.cadence_ns);
        pos(&mut v, "propagation.rtol", self.propagation.rtol);
        pos(&mut v, "propagation.atol", self.propagation.atol);

        for (i, gm) in self.stark.iter().enumerate() {
            gm.check(&format!("stark[{i}]"), &mut v);
        }

        if self.cp.enabled {
            nonneg(&mut v, "cp.c3_ground", self.cp.c3_ground);
            nonneg(&mut v, "cp.c3_excited", self.cp.c3_excited);
        }

        pos(&mut v, "probe.kappa_inv_nm", self.probe.kappa_inv_nm);
        if !(0.0..=1.0).contains(&self.probe.axial_contrast) {
            v.push(format!(
                "probe.axial_contrast: must be in [0, 1], got {}",
                self.probe.axial_contrast
            ));
        }
        if !matches!(self.probe.gap_style.as_str(), "plateau" | "two_wall" | "confined") {
            v.push(format!(
                "probe.gap_style: expected plateau, two_wall, or confined, got {:?}",
                self.probe.gap_style
            ));
        }
        nonneg(&mut v, "probe.span_mhz", self.probe.span_mhz);
        if self.probe.points == 0 {
            v.push("probe.points: must be >= 1, got 0".into());
        }
        nonneg(&mut v, "probe.gamma_1d_peak_ratio", self.probe.gamma_1d_peak_ratio);
        pos(&mut v, "probe.gamma_prime_ratio", self.probe.gamma_prime_ratio);
        pos(&mut v, "probe.n_eff", self.probe.n_eff);
        if !(self.probe.coupling_cutoff > 0.0 && self.probe.coupling_cutoff <= 1.0) {
            v.push(format!(
                "probe.coupling_cutoff: must be in (0, 1], got {}",
                self.probe.coupling_cutoff
            ));
        }

        nonneg(&mut v, "clock.rate_hz", self.clock.rate_hz);
        nonneg(&mut v, "clock.dark_rate_hz", self.clock.dark_rate_hz);
        pos(&mut v, "clock.duration_s", self.clock.duration_s);
        nonneg(&mut v, "clock.jitter_ns", self.clock.jitter_ns);
        if !(self.clock.fringe_contrast > 0.0 && self.clock.fringe_contrast <= 1.0) {
            v.push(format!(
                "clock.fringe_contrast: must be in (0, 1], got {}",
                self.clock.fringe_contrast
            ));
        }
        if self.clock.bins < 2 {
            v.push(format!("clock.bins: must be >= 2, got {}", self.clock.bins));
        }
        if self.clock.samples_per_period < 2 {
            v.push(format!(
                "clock.samples_per_period: must be >= 2, got {}",
                self.clock.samples_per_period
            ));
        }
        if !matches!(self.clock.align.as_str(), "min_od" | "xcorr" | "none") {
            v.push(format!(
                "clock.align: expected min_od, xcorr, or none, got {:?}",
                self.clock.align
            ));
        }

        if self.fit.combine_bins == 0 {
            v.push("fit.combine_bins: must be >= 1, got 0".into());
        } else if self.fit.combine_bins > self.clock.bins {
            v.push(format!(
                "fit.combine_bins: {} exceeds clock.bins = {}",
                self.fit.combine_bins, self.clock.bins
            ));
        }

        if self.capture.atoms == 0 {
            v.push("capture.atoms: must be >= 1, got 0".into());
        }
        pos(&mut v, "capture.temperature_uk", self.capture.temperature_uk);
        pos(&mut v, "capture.spread_y_nm", self.capture.spread_y_nm);
        pos(&mut v, "capture.spread_z_nm", self.capture.spread_z_nm);
        pos(&mut v, "capture.trigger_us", self.capture.trigger_us);
        if !(0.0..=1.0).contains(&self.capture.beta) {
            v.push(format!(
                "capture.beta: must be in [0, 1], got {}",
                self.capture.beta
            ));
        }
        if !(self.capture.shift_window_ghz.0 < self.capture.shift_window_ghz.1) {
            v.push(format!(
                "capture.shift_window_ghz: lower bound {} must be below upper {}",
                self.capture.shift_window_ghz.0, self.capture.shift_window_ghz.1
            ));
        }
        if !(self.capture.blue_detuning_ghz > 0.0) {
            v.push(format!(
                "capture.blue_detuning_ghz: must be blue (positive), got {}",
                self.capture.blue_detuning_ghz
            ));
        }
        if !(self.capture.red_detuning_ghz < 0.0) {
            v.push(format!(
                "capture.red_detuning_ghz: must be red (negative), got {}",
                self.capture.red_detuning_ghz
            ));
        }
        nonneg(&mut v, "capture.blue_power_uw", self.capture.blue_power_uw);
        nonneg(&mut v, "capture.red_power_uw", self.capture.red_power_uw);
        pos(&mut v, "capture.blue_kappa_inv_nm", self.capture.blue_kappa_inv_nm);
        pos(&mut v, "capture.red_kappa_inv_nm", self.capture.red_kappa_inv_nm);
        pos(&mut v, "capture.blue_z_waist_nm", self.capture.blue_z_waist_nm);
        pos(&mut v, "capture.red_z_waist_nm", self.capture.red_z_waist_nm);
        pos(&mut v, "capture.red_scale_f4", self.capture.red_scale_f4);

        v
    }

    /// Validate, collecting all violations into one [`Error::Config`].
    pub fn validated(self) -> Result<RunConfig> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::Config(violations))
        }
    }

    pub fn geometry(&self) -> Geometry2D {
        Geometry2D {
            gap: nm(self.geometry.gap_nm),
            beam_width: nm(self.geometry.beam_width_nm),
            thickness: nm(self.geometry.thickness_nm),
            unit_cell: nm(self.geometry.unit_cell_nm),
            length_cells: self.geometry.length_cells,
        }
    }

    pub fn domain(&self) -> Domain {
        Domain {
            y_half: um(self.domain.y_half_um),
            z_min: um(self.domain.z_min_um),
            z_max: um(self.domain.z_max_um),
        }
    }

    pub fn transitions(&self) -> Transitions {
        Transitions {
            excited_shift_ratio: self.transitions.excited_shift_ratio,
            ..Transitions::default()
        }
    }

    /// Compose the transport potential stack (lattice + Stark beams + CP).
    pub fn stack(&self) -> Result<PotentialStack> {
        let transitions = self.transitions();
        let mut stack = PotentialStack::new(self.geometry(), self.domain(), transitions);
        if self.lattice.enabled {
            let params = crate::fields::LatticeParams {
                wavelength: nm(self.lattice.wavelength_nm),
                waist: um(self.lattice.waist_um),
                depth: uk(self.lattice.depth_uk),
                chirp: self.lattice.chirp_mhz * 1e6,
                detuning_d2: ghz(self.lattice.detuning_d2_ghz),
                phase: self.lattice.phase_rad,
                scatter: None,
            };
            stack.lattice = Some(
                crate::fields::LatticeField::new(params, &transitions)
                    .map_err(|e| Error::Config(vec![format!("lattice: {e}")]))?,
            );
        }
        for (i, gm) in self.stark.iter().enumerate() {
            stack.gms.push(
                GmField::new(gm.mode(), &transitions)
                    .map_err(|e| Error::Config(vec![format!("stark[{i}]: {e}")]))?,
            );
        }
        if self.cp.enabled {
            stack.cp = Some(CpParams {
                c3_ground: self.cp.c3_ground,
                c3_excited: self.cp.c3_excited,
            });
        }
        stack
            .validate()
            .map_err(|e| Error::Config(vec![format!("stack: {e}")]))?;
        Ok(stack)
    }

    pub fn ensemble_spec(&self) -> EnsembleSpec {
        EnsembleSpec {
            atoms_per_pancake: self.ensemble.atoms_per_pancake,
            pancakes: self.ensemble.pancakes,
            temperature: self.ensemble.temperature_uk * 1e-6,
            launch_z: um(self.ensemble.launch_z_um),
            level: self.ensemble.level,
            seed: self.seed,
        }
    }

    pub fn propagation_spec(&self) -> PropagationSpec {
        PropagationSpec {
            t_end: us(self.propagation.t_end_us),
            cadence: ns(self.propagation.cadence_ns),
            window: None,
            opts: IntegratorOpts {
                rtol: self.propagation.rtol,
                atol: self.propagation.atol,
                ..IntegratorOpts::default()
            },
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        let n = self.probe.points;
        let center = mhz(self.probe.center_mhz);
        let span = mhz(self.probe.span_mhz);
        let detunings = if n == 1 {
            vec![center]
        } else {
            (0..n)
                .map(|i| center - span + 2.0 * span * i as f64 / (n - 1) as f64)
                .collect()
        };
        let gap_style = match self.probe.gap_style.as_str() {
            "two_wall" => GapStyle::TwoWall,
            "confined" => GapStyle::Confined {
                z_waist: nm(self.probe.z_waist_nm),
            },
            _ => GapStyle::Plateau,
        };
        ProbeConfig {
            profile: GmMode {
                polarization: self.probe.polarization,
                kappa_inv: nm(self.probe.kappa_inv_nm),
                axial_contrast: self.probe.axial_contrast,
                gap_style,
                ..GmMode::default()
            },
            detunings,
            gamma_1d_peak: self.probe.gamma_1d_peak_ratio * CS_D2_GAMMA,
            gamma_prime: self.probe.gamma_prime_ratio * CS_D2_GAMMA,
            n_eff: self.probe.n_eff,
            coupling_cutoff: self.probe.coupling_cutoff,
        }
    }

    /// Lattice period (s), the folding period of the clocked analysis.
    pub fn lattice_period(&self) -> f64 {
        1.0 / (self.lattice.chirp_mhz * 1e6)
    }

    pub fn clock_sim(&self) -> ClockSim {
        let period = self.lattice_period();
        ClockSim {
            rate: self.clock.rate_hz,
            dark_rate: self.clock.dark_rate_hz,
            duration: self.clock.duration_s,
            offset: ns(self.clock.offset_ns),
            jitter: ns(self.clock.jitter_ns),
            period,
            fringe_contrast: self.clock.fringe_contrast,
            fringe_dt: period / 200.0,
            fringe_duration: 50.0 * period,
        }
    }

    pub fn trap(&self) -> TwoColorTrap {
        let base = TwoColorTrap::default();
        let c = &self.capture;
        TwoColorTrap {
            geometry: self.geometry(),
            domain: self.domain(),
            transitions: self.transitions(),
            blue: GmMode {
                power: uw(c.blue_power_uw),
                detuning: ghz(c.blue_detuning_ghz),
                kappa_inv: nm(c.blue_kappa_inv_nm),
                gap_style: GapStyle::Confined {
                    z_waist: nm(c.blue_z_waist_nm),
                },
                ..base.blue.clone()
            },
            red: GmMode {
                power: uw(c.red_power_uw),
                detuning: ghz(c.red_detuning_ghz),
                kappa_inv: nm(c.red_kappa_inv_nm),
                gap_style: GapStyle::Confined {
                    z_waist: nm(c.red_z_waist_nm),
                },
                scale_f4: c.red_scale_f4,
                ..base.red.clone()
            },
            cp: CpParams {
                c3_ground: self.cp.c3_ground,
                c3_excited: self.cp.c3_excited,
            },
        }
    }

    pub fn capture_config(&self) -> CaptureConfig {
        CaptureConfig {
            trigger: us(self.capture.trigger_us),
            shift_window: (
                ghz(self.capture.shift_window_ghz.0),
                ghz(self.capture.shift_window_ghz.1),
            ),
            beta: self.capture.beta,
            seed: self.seed,
            ..CaptureConfig::default()
        }
    }
}

/// Set `path` (dot-separated table keys) to `raw` inside a TOML document,
/// creating intermediate tables. The value is parsed as a TOML literal;
/// anything that does not parse is taken as a bare string.
fn apply_override(doc: &mut toml::Value, path: &str, raw: &str) -> Result<()> {
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));

    let mut node = doc;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(Error::Config(vec![format!(
            "override {path:?}: empty path segment"
        )]));
    }
    for (i, seg) in segments.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            Error::Config(vec![format!(
                "override {path:?}: {} is not a table",
                segments[..i].join(".")
            )])
        })?;
        if i + 1 == segments.len() {
            table.insert((*seg).to_string(), value);
            return Ok(());
        }
        node = table
            .entry((*seg).to_string())
            .or_insert(toml::Value::Table(toml::Table::new()));
    }
    unreachable!("segments is non-empty");
}
