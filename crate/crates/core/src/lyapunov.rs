//! Lyapunov exponents: phase-averaged estimates, the closed forms for the
//! mosaic model, finite-difference acceleration and a numerical
//! sub/supercritical classifier.

use crate::cocycle::{orbit_log_norm, strip_radius, CocycleSpec, Family};
use crate::error::{CmvError, Result};
use crate::model::{mobility_edge_t0, MosaicParams};
use crate::spectral::approximate_spectrum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    /// Exponent in the per-`A`-step convention, i.e. half the rate of the
    /// two-step cocycles (for `Mz` the scalar factors are included).
    pub value: f64,
    /// Mean growth rate per step of the iterated family.
    pub raw_cocycle_rate: f64,
    pub n_steps: usize,
    pub n_phases: usize,
    /// Max minus min of the per-phase raw rates.
    pub spread: f64,
    pub family: Family,
}

/// Converts a per-step rate of `family` to the rate per `2Φ` rotation.
pub fn rate_per_rotation(family: Family, raw: f64) -> f64 {
    match family {
        Family::TransferA => 2.0 * raw,
        Family::Szego => 4.0 * raw,
        Family::TransferAPlus | Family::SzegoPP | Family::Mz => raw,
    }
}

/// The exponent convention used for `LyapunovEstimate::value`.
pub fn rate_to_value(family: Family, raw: f64) -> f64 {
    rate_per_rotation(family, raw) / 2.0
}

/// Raw rates of the orbits started at `θ_k = k / n_phases`, in order.
pub fn phase_rates(spec: &CocycleSpec, n_steps: usize, n_phases: usize) -> Result<Vec<f64>> {
    if n_phases == 0 {
        return Err(CmvError::InvalidParameter("n_phases must be at least 1".into()));
    }
    (0..n_phases)
        .into_par_iter()
        .map(|k| orbit_log_norm(spec, k as f64 / n_phases as f64, n_steps).map(|o| o.rate()))
        .collect()
}

/// Same as [`le_estimate`] without the `n_steps >= 1000` floor.
pub fn le_estimate_unchecked(spec: &CocycleSpec, n_steps: usize, n_phases: usize) -> Result<LyapunovEstimate> {
    let rates = phase_rates(spec, n_steps, n_phases)?;
    let raw = rates.iter().sum::<f64>() / rates.len() as f64;
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovEstimate {
        value: rate_to_value(spec.family, raw),
        raw_cocycle_rate: raw,
        n_steps,
        n_phases,
        spread: hi - lo,
        family: spec.family,
    })
}

pub fn le_estimate(spec: &CocycleSpec, n_steps: usize, n_phases: usize) -> Result<LyapunovEstimate> {
    if n_steps < 1000 {
        return Err(CmvError::InvalidParameter(format!("n_steps = {n_steps} is below 1000")));
    }
    le_estimate_unchecked(spec, n_steps, n_phases)
}

/// `F = log[λ2 (2λ1'|cos t| + sqrt(λ1^4 + 4λ1'^2 cos^2 t)) / (λ1^2 (1 + λ2'))]`.
pub fn f_function(lambda1: f64, lambda2: f64, t: f64) -> Result<f64> {
    if !(lambda1 > 0.0 && lambda1 <= 1.0) {
        return Err(CmvError::DegenerateCoupling(format!("lambda1 = {lambda1} must lie in (0, 1]")));
    }
    if !(0.0..=1.0).contains(&lambda2) {
        return Err(CmvError::InvalidParameter(format!("lambda2 = {lambda2} is outside [0, 1]")));
    }
    let l1p = (1.0 - lambda1 * lambda1).max(0.0).sqrt();
    let l2p = (1.0 - lambda2 * lambda2).max(0.0).sqrt();
    let c = t.cos().abs();
    let l14 = lambda1.powi(4);
    let num = lambda2 * (2.0 * l1p * c + (l14 + 4.0 * l1p * l1p * c * c).sqrt());
    Ok((num / (lambda1 * lambda1 * (1.0 + l2p))).ln())
}

/// `½ max{0, F}`.
pub fn le_closed_form(lambda1: f64, lambda2: f64, t: f64) -> Result<f64> {
    Ok(0.5 * f_function(lambda1, lambda2, t)?.max(0.0))
}

/// `log[λ1^2 (1 + λ2') / 2]`.
pub fn gamma_tilde(lambda1: f64, lambda2: f64) -> f64 {
    let l2p = (1.0 - lambda2 * lambda2).max(0.0).sqrt();
    (lambda1 * lambda1 * (1.0 + l2p) / 2.0).ln()
}

/// `∫_0^1 log|sqrt(1 - t^2 sin^2 2π(θ + iε))| dθ`
/// `= log[(1 + t') / 2] + 2π max{0, |ε| - ε0(t)}`. NaN for `t ∉ [0, 1]`.
pub fn jensen_integral(t: f64, epsilon: f64) -> f64 {
    if !(0.0..=1.0).contains(&t) {
        return f64::NAN;
    }
    if t == 0.0 {
        return 0.0;
    }
    let tp = (1.0 - t * t).max(0.0).sqrt();
    ((1.0 + tp) / 2.0).ln() + 2.0 * PI * (epsilon.abs() - strip_radius(t)).max(0.0)
}

/// One-sided estimate of `ω = (L(ε + δ) - L(ε)) / (2πδ)`, with `L` the
/// rate per `2Φ` rotation.
pub fn acceleration(spec: &CocycleSpec, delta: f64, n_steps: usize, n_phases: usize) -> Result<f64> {
    if !(delta != 0.0 && delta.is_finite()) {
        return Err(CmvError::InvalidParameter("delta must be finite and nonzero".into()));
    }
    let shifted = spec.with_epsilon(spec.epsilon + delta)?;
    let l0 = le_estimate_unchecked(spec, n_steps, n_phases)?;
    let l1 = le_estimate_unchecked(&shifted, n_steps, n_phases)?;
    let r0 = rate_per_rotation(spec.family, l0.raw_cocycle_rate);
    let r1 = rate_per_rotation(spec.family, l1.raw_cocycle_rate);
    Ok((r1 - r0) / (2.0 * PI * delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassTag {
    Subcritical,
    Critical,
    Supercritical,
    UniformlyHyperbolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// Measured exponent at `ε = 0`.
    pub l0: f64,
    /// Measured exponents at `±ε_probe`, when probed.
    pub l_probe: Option<(f64, f64)>,
    pub acceleration: Option<f64>,
    /// The closed-form `F` at this angle.
    pub f_closed_form: f64,
    /// Distance from `t` to the sampled truncation spectra, when computed.
    pub gap_distance: Option<f64>,
    /// Smallest growth rate over the phase grid (uniformity check).
    pub min_growth: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tag: ClassTag,
    pub evidence: Evidence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub n_steps: usize,
    pub n_phases: usize,
    /// `L(0)` above this declares supercritical.
    pub super_threshold: f64,
    /// `L` at `0` and `±ε_probe` at most this declares subcritical.
    pub sub_threshold: f64,
    /// `ε_probe = probe_fraction · ε0(λ2)`.
    pub probe_fraction: f64,
    /// Run the spectral-gap / uniform-growth test first.
    pub check_uniform: bool,
    /// Truncation size for the sampled spectrum.
    pub gap_window: usize,
    /// Minimal distance from the sampled spectrum for a gap.
    pub gap_margin: f64,
    /// Phases for the uniform growth check.
    pub uniform_phases: usize,
    pub uniform_steps: usize,
    /// Every phase must grow at least at this rate (per `2Φ` rotation).
    pub uniform_floor: f64,
    /// Also estimate the acceleration when supercritical.
    pub with_acceleration: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            n_steps: 1_000_000,
            n_phases: 8,
            super_threshold: 0.02,
            sub_threshold: 0.005,
            probe_fraction: 0.25,
            check_uniform: true,
            gap_window: 512,
            gap_margin: 0.02,
            uniform_phases: 64,
            uniform_steps: 2000,
            uniform_floor: 0.01,
            with_acceleration: false,
        }
    }
}

/// Tag from the sign of `F` alone (`Critical` when `|F| < 1e-12`).
pub fn analytic_class(lambda1: f64, lambda2: f64, t: f64) -> Result<ClassTag> {
    let f = f_function(lambda1, lambda2, t)?;
    Ok(if f.abs() < 1e-12 {
        ClassTag::Critical
    } else if f > 0.0 {
        ClassTag::Supercritical
    } else {
        ClassTag::Subcritical
    })
}

fn check_open_couplings(params: &MosaicParams) -> Result<()> {
    for (name, v) in [("lambda1", params.lambda1), ("lambda2", params.lambda2)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(CmvError::DegenerateCoupling(format!("{name} = {v} must lie in (0, 1)")));
        }
    }
    Ok(())
}

/// Distance on the circle between two angles.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Distance from `t` to a sorted list of angles in `[0, 2π)`.
pub fn distance_to_set(t: f64, sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return f64::INFINITY;
    }
    let t = t.rem_euclid(2.0 * PI);
    let k = sorted.partition_point(|&x| x < t);
    let a = sorted[k % sorted.len()];
    let b = sorted[(k + sorted.len() - 1) % sorted.len()];
    angle_distance(t, a).min(angle_distance(t, b))
}

/// Classifies `z = e^{it}` for the `s = 2` model. `spectrum` may carry a
/// precomputed sorted spectrum sample (see
/// [`crate::spectral::approximate_spectrum`]); otherwise it is computed
/// when the gap test is enabled.
pub fn classify_with(
    params: &MosaicParams,
    t: f64,
    opts: &ClassifyOptions,
    spectrum: Option<&[f64]>,
) -> Result<Classification> {
    check_open_couplings(params)?;
    let f = f_function(params.lambda1, params.lambda2, t)?;
    let spec = CocycleSpec::at_angle(Family::SzegoPP, *params, t, 0.0)?;
    let mut evidence = Evidence {
        l0: f64::NAN,
        l_probe: None,
        acceleration: None,
        f_closed_form: f,
        gap_distance: None,
        min_growth: None,
    };
    if opts.check_uniform {
        let owned;
        let sample = match spectrum {
            Some(s) => s,
            None => {
                owned = approximate_spectrum(params, opts.gap_window, 4)?;
                &owned
            }
        };
        let dist = distance_to_set(t, sample);
        evidence.gap_distance = Some(dist);
        if dist > opts.gap_margin {
            let rates = phase_rates(&spec, opts.uniform_steps, opts.uniform_phases)?;
            let min = rates.iter().cloned().fold(f64::INFINITY, f64::min);
            evidence.min_growth = Some(min);
            if min > opts.uniform_floor {
                evidence.l0 = rate_to_value(Family::SzegoPP, rates.iter().sum::<f64>() / rates.len() as f64);
                return Ok(Classification { tag: ClassTag::UniformlyHyperbolic, evidence });
            }
        }
    }
    let l0 = le_estimate_unchecked(&spec, opts.n_steps, opts.n_phases)?.value;
    evidence.l0 = l0;
    if l0 > opts.super_threshold {
        if opts.with_acceleration {
            let delta = 0.25 * strip_radius(params.lambda2);
            evidence.acceleration = Some(acceleration(&spec, delta, opts.n_steps, opts.n_phases)?);
        }
        return Ok(Classification { tag: ClassTag::Supercritical, evidence });
    }
    let probe = opts.probe_fraction * strip_radius(params.lambda2);
    let lp = le_estimate_unchecked(&spec.with_epsilon(probe)?, opts.n_steps, opts.n_phases)?.value;
    let lm = le_estimate_unchecked(&spec.with_epsilon(-probe)?, opts.n_steps, opts.n_phases)?.value;
    evidence.l_probe = Some((lp, lm));
    if l0.abs() <= opts.sub_threshold && lp.abs() <= opts.sub_threshold && lm.abs() <= opts.sub_threshold {
        return Ok(Classification { tag: ClassTag::Subcritical, evidence });
    }
    Err(CmvError::Inconclusive(format!(
        "L(0) = {l0:.5}, L(+eps) = {lp:.5}, L(-eps) = {lm:.5} fall between the thresholds"
    )))
}

pub fn classify(params: &MosaicParams, t: f64, opts: &ClassifyOptions) -> Result<Classification> {
    classify_with(params, t, opts, None)
}

/// Open arc `(center - half_width, center + half_width)` of angles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub center: f64,
    pub half_width: f64,
}

impl Arc {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, t: f64) -> bool {
        angle_distance(t, self.center) < self.half_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralArcs {
    pub t0: f64,
    /// Around `π/2` and `3π/2`.
    pub ac: [Arc; 2],
    /// Around `0` and `π`.
    pub pp: [Arc; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    AC,
    PP,
    Edge,
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::AC => "AC",
            Region::PP => "PP",
            Region::Edge => "Edge",
        })
    }
}

impl SpectralArcs {
    /// `Edge` within `10 / n` of `|cos t| = cos t0`, otherwise the arc
    /// containing `t`.
    pub fn region(&self, t: f64, n: usize) -> Region {
        let gap = t.cos().abs() - self.t0.cos();
        if gap.abs() < 10.0 / n as f64 {
            Region::Edge
        } else if gap < 0.0 {
            Region::AC
        } else {
            Region::PP
        }
    }

    /// The four edge angles in `[0, 2π)`.
    pub fn edges(&self) -> [f64; 4] {
        let t0 = self.t0;
        [t0, PI - t0, PI + t0, 2.0 * PI - t0]
    }
}

/// Arcs on which the closed-form exponent vanishes (`|cos t| < cos t0`,
/// around `±π/2`) or is positive (`|cos t| > cos t0`, around `0` and `π`).
pub fn spectral_arcs(lambda1: f64, lambda2: f64) -> Result<SpectralArcs> {
    let t0 = mobility_edge_t0(lambda1, lambda2)?;
    let w = PI / 2.0 - t0;
    let ac = [Arc { center: PI / 2.0, half_width: w }, Arc { center: 1.5 * PI, half_width: w }];
    let pp = [Arc { center: 0.0, half_width: t0 }, Arc { center: PI, half_width: t0 }];
    Ok(SpectralArcs { t0, ac, pp })
}
