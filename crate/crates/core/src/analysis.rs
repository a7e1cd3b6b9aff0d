//! Localization diagnostics on eigenfunction profiles and the mobility
//! edge scan.

use crate::error::{CmvError, Result};
use crate::lyapunov::{le_closed_form, spectral_arcs, Region};
use crate::model::{CoefficientSource, MosaicParams};
use crate::operators::{BoundaryCondition, IndexWindow};
use crate::spectral::{eigenvector_shooting, truncation_spectrum, EigenfunctionProfile};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};

/// `Γ = -log Σ|u_n|^4 / log N` for the normalized profile. Close to 1
/// for extended states and to 0 for localized ones.
pub fn fractal_dimension(profile: &EigenfunctionProfile) -> f64 {
    let n = profile.values.len();
    let n2: f64 = profile.values.iter().map(|v| v.norm_sqr()).sum();
    let ipr: f64 = profile.values.iter().map(|v| (v.norm_sqr() / n2).powi(2)).sum();
    -ipr.ln() / (n as f64).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideFit {
    /// Slope of `log(|u_{2n}|^2 + |u_{2n+1}|^2)` against the distance in
    /// cells from the peak.
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
    pub r_squared: f64,
}

impl SideFit {
    /// Exponent per transfer step, `-slope / 2`.
    pub fn rate(&self) -> f64 {
        -self.slope / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub left: SideFit,
    pub right: SideFit,
}

impl DecayFit {
    pub fn rate_left(&self) -> f64 {
        self.left.rate()
    }

    pub fn rate_right(&self) -> f64 {
        self.right.rate()
    }

    pub fn rate(&self) -> f64 {
        0.5 * (self.left.rate() + self.right.rate())
    }

    pub fn r_squared(&self) -> f64 {
        self.left.r_squared.min(self.right.r_squared)
    }
}

/// Cell weights below `peak * DECAY_FLOOR` (a thousand times the squared
/// machine epsilon) are excluded from the fit.
pub const DECAY_FLOOR: f64 = 1e3 * f64::EPSILON * f64::EPSILON;

fn cell_weights(profile: &EigenfunctionProfile) -> Vec<f64> {
    let w = profile.window;
    let first = w.a - w.a.rem_euclid(2);
    (0..)
        .map(|k| first + 2 * k)
        .take_while(|&m| m <= w.b)
        .map(|m| {
            [m, m + 1]
                .iter()
                .filter(|&&s| w.contains(s))
                .map(|&s| profile.values[w.offset(s)].norm_sqr())
                .sum()
        })
        .collect()
}

fn fit_side(cells: impl Iterator<Item = f64>, floor: f64) -> Result<SideFit> {
    let (mut sx, mut sy, mut sxx, mut sxy, mut syy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0, 0usize);
    for (k, c) in cells.enumerate() {
        if !(c > floor) {
            continue;
        }
        let x = (k + 1) as f64;
        let y = c.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        cnt += 1;
    }
    if cnt < 4 {
        return Err(CmvError::FloorDominated);
    }
    let nf = cnt as f64;
    let vx = sxx - sx * sx / nf;
    let cxy = sxy - sx * sy / nf;
    let vy = syy - sy * sy / nf;
    let slope = cxy / vx;
    let r_squared = if vy > 0.0 { (cxy * cxy / (vx * vy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(SideFit { slope, intercept: (sy - slope * sx) / nf, points: cnt, r_squared })
}

/// Least-squares fits of `log(|u_{2n}|^2 + |u_{2n+1}|^2)` against the
/// distance (in cells of two sites) from the peak cell, separately on
/// each side. The peak must sit at least `margin` cells from either end.
pub fn decay_rate_fit(profile: &EigenfunctionProfile, margin: usize) -> Result<DecayFit> {
    let cells = cell_weights(profile);
    let (peak, &pmax) = cells
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(CmvError::FloorDominated)?;
    if peak < margin || cells.len() - 1 - peak < margin {
        return Err(CmvError::PeakTooCloseToBoundary { peak, margin });
    }
    let floor = pmax * DECAY_FLOOR;
    let left = fit_side(cells[..peak].iter().rev().cloned(), floor)?;
    let right = fit_side(cells[peak + 1..].iter().cloned(), floor)?;
    Ok(DecayFit { left, right })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeScanRow {
    pub t: f64,
    pub gamma: f64,
    /// Decay fit of the eigenvector; NaN when the fit is not meaningful.
    pub le_measured: f64,
    pub le_predicted: f64,
    pub region: Region,
    pub theta: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeScan {
    pub params: MosaicParams,
    pub n: usize,
    pub t0: f64,
    pub rows: Vec<EdgeScanRow>,
}

/// Coefficients used by the scan: the mosaic sequence or its twin (same
/// alphas, even-index rho multiplied by `i`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanSource {
    Mosaic,
    Twin,
}

/// Every eigenvalue of the `[0, n-1]` truncation for each phase
/// `θ + k / theta_samples` and boundary phase `β = e^{2πi j / beta_samples}`
/// (both ends), with its fractal dimension, measured and predicted
/// exponent and spectral region.
pub fn mobility_edge_scan(
    params: &MosaicParams,
    n: usize,
    theta_samples: usize,
    beta_samples: usize,
) -> Result<EdgeScan> {
    mobility_edge_scan_with(params, n, theta_samples, beta_samples, ScanSource::Mosaic)
}

pub fn mobility_edge_scan_with(
    params: &MosaicParams,
    n: usize,
    theta_samples: usize,
    beta_samples: usize,
    kind: ScanSource,
) -> Result<EdgeScan> {
    if n < 16 {
        return Err(CmvError::InvalidParameter(format!("n = {n} is below 16")));
    }
    let arcs = spectral_arcs(params.lambda1, params.lambda2)?;
    let window = IndexWindow::with_len(0, n)?;
    let margin = (n / 16).max(4);
    let mut rows = Vec::new();
    for k in 0..theta_samples.max(1) {
        let theta = params.theta + k as f64 / theta_samples.max(1) as f64;
        let shifted = params.with_theta(theta);
        let src = match kind {
            ScanSource::Mosaic => CoefficientSource::mosaic(shifted),
            ScanSource::Twin => CoefficientSource::twin(shifted)?,
        };
        for j in 0..beta_samples.max(1) {
            let bang = 2.0 * PI * j as f64 / beta_samples.max(1) as f64;
            let beta = C64::from_polar(1.0, bang);
            let spec = truncation_spectrum(&src, window, beta, beta)?;
            let bc = BoundaryCondition::Phase(beta);
            let part: Vec<EdgeScanRow> = spec
                .angles
                .par_iter()
                .map(|&t| {
                    let prof = eigenvector_shooting(&src, window, t, bc, bc)?;
                    let le_measured = decay_rate_fit(&prof, margin).map(|f| f.rate()).unwrap_or(f64::NAN);
                    Ok(EdgeScanRow {
                        t,
                        gamma: fractal_dimension(&prof),
                        le_measured,
                        le_predicted: le_closed_form(params.lambda1, params.lambda2, t)?,
                        region: arcs.region(t, n),
                        theta,
                        beta: bang,
                    })
                })
                .collect::<Result<_>>()?;
            rows.extend(part);
        }
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.theta.total_cmp(&b.theta)).then(a.beta.total_cmp(&b.beta)));
    Ok(EdgeScan { params: *params, n, t0: arcs.t0, rows })
}

impl EdgeScan {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let p = &self.params;
        writeln!(
            out,
            "# lambda1={} lambda2={} phi={} theta={} n={} t0={:.12}",
            p.lambda1, p.lambda2, p.phi, p.theta, self.n, self.t0
        )?;
        writeln!(out, "t,gamma,le_measured,le_predicted,region,theta,beta")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.15e},{:.6e},{:.6e},{:.6e},{},{:.15e},{:.15e}",
                r.t, r.gamma, r.le_measured, r.le_predicted, r.region, r.theta, r.beta
            )?;
        }
        Ok(())
    }

    /// Mean fractal dimension per region, `(region, mean, count)`.
    pub fn region_means(&self) -> Vec<(Region, f64, usize)> {
        [Region::AC, Region::PP, Region::Edge]
            .into_iter()
            .map(|reg| {
                let g: Vec<f64> = self.rows.iter().filter(|r| r.region == reg).map(|r| r.gamma).collect();
                let mean = if g.is_empty() { f64::NAN } else { g.iter().sum::<f64>() / g.len() as f64 };
                (reg, mean, g.len())
            })
            .collect()
    }
}

/// Number of Chebyshev points used to discretize `[-1, 1]`.
pub const UNIFORM_GRID: usize = 1000;

/// Smallest `ε` with `∏_{j≠i} |x - x_j| / |x_i - x_j| <= e^{kε}` for all `i`
/// and all `x` in a Chebyshev grid on `[-1, 1]`, where `x_j = cos 2πθ_j`
/// and `k + 1` is the number of angles.
pub fn eps_uniform_measure(angles: &[f64]) -> Result<f64> {
    if angles.len() < 2 {
        return Err(CmvError::InvalidParameter("need at least two angles".into()));
    }
    let xs: Vec<f64> = angles.iter().map(|&t| (2.0 * PI * t).cos()).collect();
    let k = xs.len() - 1;
    let mut log_den = vec![0.0; xs.len()];
    for (i, &xi) in xs.iter().enumerate() {
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                let d = (xi - xj).abs();
                if d < 1e-14 {
                    return Err(CmvError::DuplicateNodes);
                }
                log_den[i] += d.ln();
            }
        }
    }
    let grid = chebyshev_nodes(-1.0, 1.0, UNIFORM_GRID);
    let worst = grid
        .par_iter()
        .map(|&x| {
            let logs: Vec<f64> = xs.iter().map(|&xj| (x - xj).abs().ln()).collect();
            let total: f64 = logs.iter().sum();
            (0..xs.len())
                .map(|i| total - logs[i] - log_den[i])
                .filter(|v| !v.is_nan())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    Ok(worst / k as f64)
}

/// Chebyshev points of the first kind on `[lo, hi]`.
pub fn chebyshev_nodes(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let x = ((2 * k + 1) as f64 * PI / (2 * n) as f64).cos();
            0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        })
        .collect()
}
