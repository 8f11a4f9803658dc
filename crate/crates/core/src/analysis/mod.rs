//! Effective single-mode model fits of transmission spectra.
//!
//! Each folded time bin of a [`ClockedSpectrum`](crate::clocking::ClockedSpectrum)
//! carries one transmission spectrum T(Δ_p). The atoms coupled to the guided
//! mode in that bin are summarized by four parameters: an effective coupled
//! decay rate Γ₁ᴰᵉᶠᶠ, a collective shift J, the residual linewidth Γ′, and a
//! common light shift Δ_AC. With δ = Δ_p − Δ_AC the model transmission is
//!
//!   T = | (δ + iΓ′/2) / ((δ + J) + i(Γ′ + Γ₁ᴰᵉᶠᶠ)/2) |²
//!
//! which reduces exactly to the transfer-matrix result for one stationary
//! atom when J = 0. Slices are fit by bounded Levenberg-Marquardt with an
//! analytic Jacobian; a time series chains slice fits over the folded bins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clocking::{ratio_cell, ClockedSpectrum};
use crate::constants::CS_D2_GAMMA;
use crate::error::FitError;
use crate::units::mhz;
use crate::Result;

/// The four effective-model parameters (all rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    /// Effective waveguide-coupled decay rate Γ₁ᴰᵉᶠᶠ ≥ 0.
    pub gamma_eff: f64,
    /// Collective frequency shift J of the coupled resonance.
    pub j_eff: f64,
    /// Residual (uncoupled) linewidth Γ′ > 0.
    pub gamma_prime: f64,
    /// Common light shift Δ_AC of the atomic resonance.
    pub delta_ac: f64,
}

impl FitParams {
    pub fn to_array(self) -> [f64; 4] {
        [self.gamma_eff, self.j_eff, self.gamma_prime, self.delta_ac]
    }

    pub fn from_array(p: [f64; 4]) -> Self {
        FitParams {
            gamma_eff: p[0],
            j_eff: p[1],
            gamma_prime: p[2],
            delta_ac: p[3],
        }
    }
}

/// Box constraints for the fit, (low, high) per parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitBounds {
    pub gamma_eff: (f64, f64),
    pub j_eff: (f64, f64),
    pub gamma_prime: (f64, f64),
    pub delta_ac: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        FitBounds {
            gamma_eff: (0.0, 100.0 * CS_D2_GAMMA),
            j_eff: (-mhz(100.0), mhz(100.0)),
            gamma_prime: (CS_D2_GAMMA, 100.0 * CS_D2_GAMMA),
            delta_ac: (-mhz(100.0), mhz(100.0)),
        }
    }
}

impl FitBounds {
    pub fn to_array(self) -> [(f64, f64); 4] {
        [self.gamma_eff, self.j_eff, self.gamma_prime, self.delta_ac]
    }

    fn clamp(&self, p: &mut [f64; 4]) {
        for (x, (lo, hi)) in p.iter_mut().zip(self.to_array()) {
            *x = x.clamp(lo, hi);
        }
    }
}

/// How a slice fit terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// One or more parameters had no measurable effect on the data; their
    /// uncertainties are reported as half the allowed range.
    Degenerate,
}

impl FitStatus {
    pub fn label(&self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIterations => "maxiter",
            FitStatus::Degenerate => "degenerate",
        }
    }
}

/// A completed slice fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    /// Per-parameter 1-sigma uncertainties from the Jacobian at the optimum.
    pub sigma: FitParams,
    /// chi^2 per degree of freedom.
    pub red_chi2: f64,
    /// Final chi^2.
    pub cost: f64,
    pub iterations: usize,
    pub status: FitStatus,
}

/// One entry of a fit time series; `fit` is `None` for slices that could not
/// be fit (too few valid points).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSeriesEntry {
    /// Center of the combined folded-time window (s).
    pub time: f64,
    pub fit: Option<FitResult>,
}

/// Model transmission at probe detuning `delta_p` (rad/s).
pub fn model_t(delta_p: f64, params: &FitParams) -> f64 {
    let d = delta_p - params.delta_ac;
    let half_prime = 0.5 * params.gamma_prime;
    let half_total = 0.5 * (params.gamma_prime + params.gamma_eff);
    let n2 = d * d + half_prime * half_prime;
    let d2 = (d + params.j_eff).powi(2) + half_total * half_total;
    n2 / d2
}

/// Analytic gradient of [`model_t`] with respect to
/// (gamma_eff, j_eff, gamma_prime, delta_ac), in that order.
fn model_grad(delta_p: f64, p: &[f64; 4]) -> (f64, [f64; 4]) {
    let [ge, j, gp, dac] = *p;
    let d = delta_p - dac;
    let n2 = d * d + 0.25 * gp * gp;
    let d2 = (d + j).powi(2) + 0.25 * (gp + ge).powi(2);
    let t = n2 / d2;
    let grad = [
        -t * (gp + ge) / (2.0 * d2),
        -2.0 * t * (d + j) / d2,
        (0.5 * gp - 0.5 * t * (gp + ge)) / d2,
        (-2.0 * d + 2.0 * t * (d + j)) / d2,
    ];
    (t, grad)
}

const MAX_ITERATIONS: usize = 200;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_GROW: f64 = 4.0;
const LAMBDA_SHRINK: f64 = 3.0;
const LAMBDA_MAX: f64 = 1e12;
/// Relative chi^2 improvement below which the fit is considered converged.
const CHI2_RTOL: f64 = 1e-12;
/// diag(JᵀWJ) below this fraction of the largest entry marks a parameter as
/// unconstrained by the data.
const DEGENERATE_RTOL: f64 = 1e-12;

fn chi2_and_normal(
    detunings: &[f64],
    values: &[f64],
    weights: &[f64],
    p: &[f64; 4],
) -> (f64, [[f64; 4]; 4], [f64; 4]) {
    let mut chi2 = 0.0;
    let mut a = [[0.0; 4]; 4];
    let mut g = [0.0; 4];
    for ((&dp, &y), &w) in detunings.iter().zip(values).zip(weights) {
        let (t, grad) = model_grad(dp, p);
        let r = y - t;
        chi2 += w * r * r;
        for i in 0..4 {
            g[i] += w * grad[i] * r;
            for k in i..4 {
                a[i][k] += w * grad[i] * grad[k];
            }
        }
    }
    for i in 0..4 {
        for k in 0..i {
            a[i][k] = a[k][i];
        }
    }
    (chi2, a, g)
}

fn solve4(m: &[[f64; 4]; 4], b: &[f64; 4]) -> Option<[f64; 4]> {
    let mut aug = [[0.0f64; 5]; 4];
    for i in 0..4 {
        aug[i][..4].copy_from_slice(&m[i]);
        aug[i][4] = b[i];
    }
    for col in 0..4 {
        let (pivot, max) = (col..4)
            .map(|r| (r, aug[r][col].abs()))
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if max < 1e-300 {
            return None;
        }
        aug.swap(col, pivot);
        for r in 0..4 {
            if r == col {
                continue;
            }
            let f = aug[r][col] / aug[col][col];
            for c in col..5 {
                aug[r][c] -= f * aug[col][c];
            }
        }
    }
    let mut x = [0.0; 4];
    for i in 0..4 {
        x[i] = aug[i][4] / aug[i][i];
        if !x[i].is_finite() {
            return None;
        }
    }
    Some(x)
}

fn invert4(m: &[[f64; 4]; 4]) -> Option<[[f64; 4]; 4]> {
    let mut cols = [[0.0f64; 4]; 4];
    for k in 0..4 {
        let mut e = [0.0; 4];
        e[k] = 1.0;
        let x = solve4(m, &e)?;
        for i in 0..4 {
            cols[i][k] = x[i];
        }
    }
    Some(cols)
}

/// Weighted Levenberg-Marquardt fit of one transmission slice.
///
/// `init` seeds the search; when absent the starting point is built from the
/// data (depth and location of the minimum). Parameters are kept inside
/// `bounds` by projection after each step. The covariance is
/// `(JᵀWJ)⁻¹` at the optimum, so reported uncertainties scale linearly with
/// the supplied `sigmas`.
pub fn fit_slice(
    detunings: &[f64],
    values: &[f64],
    sigmas: &[f64],
    init: Option<FitParams>,
    bounds: &FitBounds,
) -> Result<FitResult> {
    let n = detunings.len();
    if n < 5 {
        return Err(FitError::BadInput(format!("need at least 5 points, got {n}")).into());
    }
    if values.len() != n || sigmas.len() != n {
        return Err(FitError::BadInput(format!(
            "length mismatch: {n} detunings, {} values, {} sigmas",
            values.len(),
            sigmas.len()
        ))
        .into());
    }
    if let Some(i) = (0..n).find(|&i| {
        !detunings[i].is_finite() || !values[i].is_finite() || !(sigmas[i] > 0.0) || !sigmas[i].is_finite()
    }) {
        return Err(FitError::BadInput(format!(
            "non-finite point or non-positive sigma at index {i}"
        ))
        .into());
    }
    let weights: Vec<f64> = sigmas.iter().map(|s| 1.0 / (s * s)).collect();
    let barr = bounds.to_array();
    if barr.iter().any(|(lo, hi)| !(lo < hi)) {
        return Err(FitError::BadInput("bounds must satisfy low < high".into()).into());
    }

    let mut p = match init {
        Some(ip) => ip.to_array(),
        None => {
            let (mut min_i, mut min_v) = (0usize, f64::INFINITY);
            for (i, &v) in values.iter().enumerate() {
                if v < min_v {
                    min_v = v;
                    min_i = i;
                }
            }
            let t_floor = min_v.clamp(1e-6, 1.0);
            let gp = CS_D2_GAMMA;
            [gp * (t_floor.sqrt().recip() - 1.0), 0.0, gp, detunings[min_i]]
        }
    };
    bounds.clamp(&mut p);

    let mut lambda = LAMBDA_INIT;
    let (mut chi2, mut a, mut g) = chi2_and_normal(detunings, values, &weights, &p);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let max_diag = a[0][0].max(a[1][1]).max(a[2][2]).max(a[3][3]);
        if max_diag <= 0.0 || !max_diag.is_finite() {
            break;
        }
        let mut damped = a;
        for i in 0..4 {
            let d = a[i][i].max(DEGENERATE_RTOL * max_diag);
            damped[i][i] = a[i][i] + lambda * d;
        }
        let Some(step) = solve4(&damped, &g) else {
            lambda *= LAMBDA_GROW;
            if lambda > LAMBDA_MAX {
                break;
            }
            continue;
        };
        let mut trial = p;
        for i in 0..4 {
            trial[i] += step[i];
        }
        bounds.clamp(&mut trial);
        let (chi2_t, a_t, g_t) = chi2_and_normal(detunings, values, &weights, &trial);
        if chi2_t <= chi2 {
            let gain = chi2 - chi2_t;
            p = trial;
            a = a_t;
            g = g_t;
            let done = gain <= CHI2_RTOL * chi2.max(1e-30);
            chi2 = chi2_t;
            lambda = (lambda / LAMBDA_SHRINK).max(1e-12);
            if done {
                converged = true;
                break;
            }
        } else {
            lambda *= LAMBDA_GROW;
            if lambda > LAMBDA_MAX {
                // No acceptable downhill step remains at any damping.
                converged = true;
                break;
            }
        }
    }
    if !converged && iterations >= MAX_ITERATIONS {
        // fall through; status recorded below
    }

    // Covariance from the (reduced) normal matrix at the optimum.
    let max_diag = a[0][0].max(a[1][1]).max(a[2][2]).max(a[3][3]);
    let mut degenerate = [false; 4];
    let mut any_degenerate = false;
    if max_diag <= 0.0 || !max_diag.is_finite() {
        degenerate = [true; 4];
        any_degenerate = true;
    } else {
        for i in 0..4 {
            if a[i][i] <= DEGENERATE_RTOL * max_diag {
                degenerate[i] = true;
                any_degenerate = true;
            }
        }
    }
    let mut reduced = a;
    for i in 0..4 {
        if degenerate[i] {
            for k in 0..4 {
                reduced[i][k] = 0.0;
                reduced[k][i] = 0.0;
            }
            reduced[i][i] = 1.0;
        }
    }
    let half_width = |i: usize| 0.5 * (barr[i].1 - barr[i].0);
    let mut sigma = [0.0f64; 4];
    match invert4(&reduced) {
        Some(cov) => {
            for i in 0..4 {
                sigma[i] = if degenerate[i] {
                    half_width(i)
                } else if cov[i][i] > 0.0 {
                    cov[i][i].sqrt()
                } else {
                    degenerate[i] = true;
                    any_degenerate = true;
                    half_width(i)
                };
            }
        }
        None => {
            any_degenerate = true;
            for i in 0..4 {
                sigma[i] = half_width(i);
            }
        }
    }

    let status = if any_degenerate {
        FitStatus::Degenerate
    } else if converged {
        FitStatus::Converged
    } else {
        FitStatus::MaxIterations
    };
    let dof = (n.saturating_sub(4)).max(1) as f64;
    Ok(FitResult {
        params: FitParams::from_array(p),
        sigma: FitParams::from_array(sigma),
        red_chi2: chi2 / dof,
        cost: chi2,
        iterations,
        status,
    })
}

/// Fit every combined folded-time window of a clocked spectrum.
///
/// Windows are `combine_bins` adjacent folded bins; their raw counts are
/// re-summed before normalization so the combined transmission is the
/// count-weighted average. With `warm_start` the slices run sequentially and
/// each fit starts from the previous result; otherwise slices run in
/// parallel from the shared data-driven start. Slices with fewer than 5
/// valid points come back as gaps (`fit: None`).
pub fn fit_timeseries(
    spectrum: &ClockedSpectrum,
    combine_bins: usize,
    warm_start: bool,
    bounds: &FitBounds,
) -> Result<Vec<FitSeriesEntry>> {
    if combine_bins == 0 {
        return Err(FitError::BadInput("combine_bins must be at least 1".into()).into());
    }
    let bins = spectrum.bins;
    let n_det = spectrum.detunings.len();
    let width = spectrum.bin_width();
    let pa = spectrum.periods_atoms as f64;
    let pr = spectrum.periods_ref as f64;
    if pa <= 0.0 || pr <= 0.0 {
        return Err(FitError::BadInput("spectrum carries no folded periods".into()).into());
    }

    let groups: Vec<(usize, usize)> = (0..bins)
        .step_by(combine_bins)
        .map(|start| (start, (start + combine_bins).min(bins)))
        .collect();

    let slice_data = |&(start, end): &(usize, usize)| -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
        let time = 0.5 * (start + end) as f64 * width;
        let mut dets = Vec::with_capacity(n_det);
        let mut vals = Vec::with_capacity(n_det);
        let mut sigs = Vec::with_capacity(n_det);
        for d in 0..n_det {
            let (mut na, mut nr) = (0u64, 0u64);
            for b in start..end {
                na += spectrum.counts_atoms[d * bins + b];
                nr += spectrum.counts_ref[d * bins + b];
            }
            let cell = ratio_cell(na, nr, pa, pr);
            if cell.valid && cell.sigma > 0.0 {
                dets.push(spectrum.detunings[d]);
                vals.push(cell.value);
                sigs.push(cell.sigma);
            }
        }
        (time, dets, vals, sigs)
    };

    if warm_start {
        let mut out = Vec::with_capacity(groups.len());
        let mut previous: Option<FitParams> = None;
        for grp in &groups {
            let (time, dets, vals, sigs) = slice_data(grp);
            let fit = if dets.len() >= 5 {
                fit_slice(&dets, &vals, &sigs, previous, bounds).ok()
            } else {
                None
            };
            if let Some(f) = &fit {
                previous = Some(f.params);
            }
            out.push(FitSeriesEntry { time, fit });
        }
        Ok(out)
    } else {
        Ok(groups
            .par_iter()
            .map(|grp| {
                let (time, dets, vals, sigs) = slice_data(grp);
                let fit = if dets.len() >= 5 {
                    fit_slice(&dets, &vals, &sigs, None, bounds).ok()
                } else {
                    None
                };
                FitSeriesEntry { time, fit }
            })
            .collect())
    }
}
