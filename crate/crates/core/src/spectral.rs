//! Characteristic polynomials through Szego products, truncation spectra
//! on the unit circle, finite-volume Green's functions, eigenvectors and
//! regularity diagnostics.

use crate::error::{CmvError, Result};
use crate::lyapunov::{angle_distance, distance_to_set};
use crate::model::{CoefficientSource, MosaicParams};
use crate::operators::{assemble_finite, lm_factors, BoundaryCondition, IndexWindow, LmFactors};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{self, Write};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const TAU: f64 = 2.0 * PI;

/// `mantissa * e^{log_scale}`, for values that over- or underflow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub mantissa: C64,
    pub log_scale: f64,
}

impl Scaled {
    pub fn one() -> Self {
        Scaled { mantissa: ONE, log_scale: 0.0 }
    }

    pub fn value(&self) -> C64 {
        self.mantissa * self.log_scale.exp()
    }

    pub fn log_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.log_scale
    }
}

fn boundary_alpha(source: &CoefficientSource, bc: BoundaryCondition, j: i64) -> C64 {
    bc.beta().unwrap_or_else(|| source.alpha_at(j))
}

/// Unnormalized Szego product `∏_{j=b-1..a} [[z, -conj α_j], [-α_j z, 1]] (1, -β1)`
/// with running rescaling.
fn szego_vector(source: &CoefficientSource, a: i64, b: i64, beta1: C64, z: C64) -> ([C64; 2], f64) {
    let mut v = [ONE, -beta1];
    let mut log_scale = 0.0;
    for j in a..b {
        let al = source.alpha_at(j);
        v = [z * v[0] - al.conj() * v[1], -al * z * v[0] + v[1]];
        let m = v[0].norm().max(v[1].norm());
        if m > 1e100 || (m < 1e-100 && m > 0.0) {
            v = [v[0] / m, v[1] / m];
            log_scale += m.ln();
        }
    }
    (v, log_scale)
}

/// `det(z - E_[a,b])` as a scaled value together with the relative size of
/// the final cancellation `|z v1 - conj(β2) v2| / (|z v1| + |β2 v2|)`.
/// An empty window (`a > b`) gives exactly 1.
fn raw_det(
    source: &CoefficientSource,
    a: i64,
    b: i64,
    left: BoundaryCondition,
    right: BoundaryCondition,
    z: C64,
) -> (Scaled, f64) {
    if a > b {
        return (Scaled::one(), 1.0);
    }
    let beta1 = boundary_alpha(source, left, a - 1);
    let beta2 = boundary_alpha(source, right, b);
    let (v, log_scale) = szego_vector(source, a, b, beta1, z);
    let p = z * v[0];
    let q = beta2.conj() * v[1];
    let val = p - q;
    let denom = p.norm() + q.norm();
    let rel = if denom > 0.0 { val.norm() / denom } else { 0.0 };
    (Scaled { mantissa: val, log_scale }, rel)
}

/// `Σ_{j=a..b} log|ρ_j|`.
fn log_rho(source: &CoefficientSource, a: i64, b: i64) -> Result<f64> {
    let mut s = 0.0;
    for j in a..=b {
        let m = source.rho_at(j).norm();
        if !(m >= 1e-14) {
            return Err(CmvError::SingularRho { index: j, modulus: m });
        }
        s += m.ln();
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharPolyValue {
    /// `P = det(z - E_Λ) / ρ_Λ` with `ρ_Λ = ∏_{j∈Λ} |ρ_j|`.
    pub normalized: C64,
    pub raw_det: C64,
    /// `log |P|`, finite even when `normalized` overflows.
    pub log_abs_normalized: f64,
    pub log_rho: f64,
    pub window: IndexWindow,
    pub left: BoundaryCondition,
    pub right: BoundaryCondition,
}

/// `P^{β1,β2}_{z,Λ} = [z, -conj β2] · |ρ_b|^{-1} ∏_{j=b-1..a} S~_{j,z} · [1, -β1]^T`,
/// with `S~_j = |ρ_j|^{-1} [[z, -conj α_j], [-α_j z, 1]]`. Open ends use the
/// source's own `α_{a-1}` or `α_b`.
pub fn char_poly(
    source: &CoefficientSource,
    window: IndexWindow,
    left: BoundaryCondition,
    right: BoundaryCondition,
    z: C64,
) -> Result<CharPolyValue> {
    if !(z.norm() > 1e-12) {
        return Err(CmvError::InvalidParameter("z must be bounded away from 0".into()));
    }
    let (raw, _) = raw_det(source, window.a, window.b, left, right, z);
    let lr = log_rho(source, window.a, window.b)?;
    let normalized = Scaled { mantissa: raw.mantissa, log_scale: raw.log_scale - lr };
    Ok(CharPolyValue {
        normalized: normalized.value(),
        raw_det: raw.value(),
        log_abs_normalized: normalized.log_abs(),
        log_rho: lr,
        window,
        left,
        right,
    })
}

/// The four sign variants `[[P^{β1,β2}, P^{-β1,β2}], [P^{β1,-β2}, P^{-β1,-β2}]]`
/// (normalized) for phase boundary conditions.
pub fn char_poly_variants(
    source: &CoefficientSource,
    window: IndexWindow,
    beta1: C64,
    beta2: C64,
    z: C64,
) -> Result<[[C64; 2]; 2]> {
    let mut out = [[ZERO; 2]; 2];
    for (r, s2) in [(0, 1.0), (1, -1.0)] {
        for (c, s1) in [(0, 1.0), (1, -1.0)] {
            out[r][c] = char_poly(
                source,
                window,
                BoundaryCondition::Phase(beta1 * s1),
                BoundaryCondition::Phase(beta2 * s2),
                z,
            )?
            .normalized;
        }
    }
    Ok(out)
}

/// Eigenvalue angles of a unitary truncation, sorted in `[0, 2π)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub angles: Vec<f64>,
    /// Backward error `||E u - e^{it} u||` of an inverse-iteration
    /// eigenvector at each refined root.
    pub residuals: Vec<f64>,
    /// Largest entry of `residuals`.
    pub residual: f64,
    pub count: usize,
    pub beta1: C64,
    pub beta2: C64,
}

/// Phase function whose level crossings are the eigenvalues: with
/// `φ_a = arg(-conj β1)` and `φ_{j+1} = φ_j + t - 2 arg(1 - α_j e^{i(φ_j + t)})`,
/// `Θ(t) = t + φ_b`. It increases strictly, gains `2πN` over a turn, and
/// `e^{it}` is an eigenvalue iff `Θ(t) ≡ arg(conj β2) (mod 2π)`.
/// Returns `(Θ, Θ')`.
fn phase_count(alphas: &[C64], phi0: f64, t: f64) -> (f64, f64) {
    let mut phi = phi0;
    let mut dphi = 0.0;
    for &al in alphas {
        let psi = phi + t;
        let dpsi = dphi + 1.0;
        let e = C64::from_polar(1.0, psi);
        let ae = al * e;
        let u = ONE - ae;
        phi = psi - 2.0 * u.arg();
        // d arg(u) / dψ = Im(-i α e^{iψ} / u)
        let g = (C64::new(0.0, -1.0) * ae / u).im;
        dphi = dpsi * (1.0 - 2.0 * g);
    }
    (t + phi, 1.0 + dphi)
}

fn check_unit(beta: C64) -> Result<C64> {
    let m = beta.norm();
    if !((m - 1.0).abs() <= 1e-12) {
        return Err(CmvError::NotOnUnitCircle { modulus: m });
    }
    Ok(beta)
}

/// All `|Λ|` eigenvalues of `E_Λ^{β1,β2}`: scan `Θ` on a grid of
/// `16 |Λ|` points, count the levels crossed in each cell (exact, since
/// `Θ` is monotone) and refine each level by safeguarded Newton. Each
/// root is certified by the residual of an inverse-iteration eigenvector.
pub fn truncation_spectrum(
    source: &CoefficientSource,
    window: IndexWindow,
    beta1: C64,
    beta2: C64,
) -> Result<SpectrumResult> {
    let beta1 = check_unit(beta1)?;
    let beta2 = check_unit(beta2)?;
    let n = window.len();
    let alphas: Vec<C64> = (window.a..window.b).map(|j| source.alpha_at(j)).collect();
    for (k, al) in alphas.iter().enumerate() {
        if !(al.norm() < 1.0 - 1e-14) {
            let j = window.a + k as i64;
            return Err(CmvError::SingularRho { index: j, modulus: source.rho_at(j).norm() });
        }
    }
    let phi0 = (-beta1.conj()).arg();
    let target = beta2.conj().arg();
    let grid = 16 * n;
    let ts: Vec<f64> = (0..=grid).map(|i| TAU * i as f64 / grid as f64).collect();
    let vals: Vec<f64> = ts.par_iter().map(|&t| phase_count(&alphas, phi0, t).0).collect();
    let level = |v: f64| ((v - target) / TAU).floor() as i64;
    let mut jobs = Vec::with_capacity(n);
    for i in 0..grid {
        let (k0, k1) = (level(vals[i]), level(vals[i + 1]));
        for k in k0 + 1..=k1 {
            jobs.push((i, target + TAU * k as f64));
        }
    }
    if jobs.len() != n {
        return Err(CmvError::RootCountMismatch { found: jobs.len(), expected: n });
    }
    let (l, r) = (BoundaryCondition::Phase(beta1), BoundaryCondition::Phase(beta2));
    let factors = lm_factors(source, window, l, r);
    let op = factors.to_operator(l, r);
    let z_res = |t: f64| inverse_iterate(&factors, &op, C64::from_polar(1.0, t)).map_or(f64::INFINITY, |p| p.1);
    let mut roots: Vec<(f64, f64)> = jobs
        .par_iter()
        .map(|&(i, lev)| {
            let (mut lo, mut hi) = (ts[i], ts[i + 1]);
            let (flo, fhi) = (vals[i] - lev, vals[i + 1] - lev);
            let mut t = lo + (hi - lo) * (-flo / (fhi - flo)).clamp(0.0, 1.0);
            for _ in 0..100 {
                let (v, dv) = phase_count(&alphas, phi0, t);
                let f = v - lev;
                if f < 0.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                if f.abs() < 1e-13 * (1.0 + lev.abs()) || hi - lo < 1e-15 {
                    break;
                }
                let step = t - f / dv;
                t = if dv > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
            }
            let t = t.rem_euclid(TAU);
            let t = if t >= TAU { 0.0 } else { t };
            (t, z_res(t))
        })
        .collect();
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let angles: Vec<f64> = roots.iter().map(|r| r.0).collect();
    let residuals: Vec<f64> = roots.iter().map(|r| r.1).collect();
    let residual = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(SpectrumResult { count: angles.len(), angles, residuals, residual, beta1, beta2 })
}

/// Writes rows `angle,residual,beta1,beta2,theta` (boundary phases as
/// angles in `[0, 2π)`).
pub fn write_spectrum_csv<W: Write>(mut out: W, rows: &[(SpectrumResult, f64)]) -> io::Result<()> {
    writeln!(out, "angle,residual,beta1,beta2,theta")?;
    for (s, theta) in rows {
        let b1 = s.beta1.arg().rem_euclid(TAU);
        let b2 = s.beta2.arg().rem_euclid(TAU);
        for (a, r) in s.angles.iter().zip(&s.residuals) {
            writeln!(out, "{a:.15e},{r:.3e},{b1:.15e},{b2:.15e},{theta:.15e}")?;
        }
    }
    Ok(())
}

/// The four boundary phases `1, i, -1, -i`.
pub const BETAS: [C64; 4] = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)];

/// Eigenvalues of the `β1 = β2 = betas[0]` truncation that reappear,
/// within `tol`, in the spectra for every other phase in `betas`, and whose
/// eigenvector keeps less than half its weight in the outer eighths of the
/// window. Boundary states move with the boundary phase or sit at the ends,
/// and are dropped.
pub fn bulk_angles(source: &CoefficientSource, window: IndexWindow, betas: &[C64], tol: f64) -> Result<Vec<f64>> {
    let spectra: Vec<SpectrumResult> =
        betas.iter().map(|&b| truncation_spectrum(source, window, b, b)).collect::<Result<_>>()?;
    let bc = BoundaryCondition::Phase(betas[0]);
    let strip = (window.len() / 8).max(1);
    let kept: Vec<Option<f64>> = spectra[0]
        .angles
        .par_iter()
        .map(|&t| {
            if !spectra[1..].iter().all(|s| distance_to_set(t, &s.angles) < tol) {
                return Ok(None);
            }
            if window.len() < 16 {
                return Ok(Some(t));
            }
            let v = eigenvector_shooting(source, window, t, bc, bc)?.values;
            let n = v.len();
            let outer: f64 = v[..strip].iter().chain(&v[n - strip..]).map(|x| x.norm_sqr()).sum();
            Ok((outer < 0.5).then_some(t))
        })
        .collect::<Result<_>>()?;
    Ok(kept.into_iter().flatten().collect())
}

/// Sample of the spectrum of the `s`-model: union of the bulk eigenvalues
/// of `[0, n-1]` truncations over the phases `θ + k / n_theta`, sorted.
pub fn approximate_spectrum(params: &MosaicParams, n: usize, n_theta: usize) -> Result<Vec<f64>> {
    let window = IndexWindow::with_len(0, n)?;
    let tol = 4.0 * TAU / n as f64;
    let mut all = Vec::new();
    for k in 0..n_theta.max(1) {
        let src = CoefficientSource::mosaic(params.with_theta(params.theta + k as f64 / n_theta.max(1) as f64));
        all.extend(bulk_angles(&src, window, &BETAS, tol)?);
    }
    all.sort_by(|a, b| a.total_cmp(b));
    Ok(all)
}

/// Symmetric Hausdorff distance between two angle sets on the circle.
pub fn hausdorff_circle(a: &[f64], b: &[f64]) -> f64 {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.total_cmp(y));
    sb.sort_by(|x, y| x.total_cmp(y));
    let d1 = sa.iter().map(|&t| distance_to_set(t, &sb)).fold(0.0, f64::max);
    let d2 = sb.iter().map(|&t| distance_to_set(t, &sa)).fold(0.0, f64::max);
    d1.max(d2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    /// `G(x, y)` from a linear solve of `(z L^* - M) G = 1` on the window.
    pub value: C64,
    /// `|P^{β1,•}_{[a,x∧y-1]} P^{•,β2}_{[x∨y+1,b]} / (|ρ_{x∨y}| P^{β1,β2}_Λ)|`.
    pub quotient: f64,
    /// `| |value| / quotient - 1 |`.
    pub defect: f64,
}

/// Relative determinant residual below which `z` counts as an eigenvalue.
pub const NEAR_EIGENVALUE: f64 = 1e-10;

fn near_eigenvalue_check(
    source: &CoefficientSource,
    window: IndexWindow,
    left: BoundaryCondition,
    right: BoundaryCondition,
    z: C64,
) -> Result<Scaled> {
    let (det, rel) = raw_det(source, window.a, window.b, left, right, z);
    if rel < NEAR_EIGENVALUE {
        return Err(CmvError::NearEigenvalue { relative: rel });
    }
    Ok(det)
}

fn unit(n: usize, k: usize) -> Vec<C64> {
    let mut e = vec![ZERO; n];
    e[k] = ONE;
    e
}

/// Finite-volume Green's function at lattice sites `(x, y)`, with the
/// magnitude cross-checked against the polynomial quotient (valid on the
/// unit circle).
pub fn greens_function(
    source: &CoefficientSource,
    window: IndexWindow,
    left: BoundaryCondition,
    right: BoundaryCondition,
    z: C64,
    x: i64,
    y: i64,
) -> Result<GreenValue> {
    if !window.contains(x) || !window.contains(y) {
        return Err(CmvError::InvalidParameter(format!("({x}, {y}) lies outside [{}, {}]", window.a, window.b)));
    }
    let det = near_eigenvalue_check(source, window, left, right, z)?;
    let k = lm_factors(source, window, left, right).pencil(z);
    let col = k
        .solve(&unit(window.len(), window.offset(y)))
        .ok_or(CmvError::NearEigenvalue { relative: 0.0 })?;
    let value = col[window.offset(x)];
    let (lo, hi) = (x.min(y), x.max(y));
    let (pl, _) = raw_det(source, window.a, lo - 1, left, BoundaryCondition::Open, z);
    let (pr, _) = raw_det(source, hi + 1, window.b, BoundaryCondition::Open, right, z);
    let log_q = pl.log_abs() - log_rho(source, window.a, lo - 1)? + pr.log_abs() - log_rho(source, hi + 1, window.b)?
        - source.rho_at(hi).norm().ln()
        - (det.log_abs() - log_rho(source, window.a, window.b)?);
    let quotient = log_q.exp();
    let defect = (value.norm().ln() - log_q).exp_m1().abs();
    Ok(GreenValue { value, quotient, defect })
}

/// Row `y` of the Green's function, `G(y, n)` for all `n` in the window.
pub fn green_row(
    source: &CoefficientSource,
    window: IndexWindow,
    left: BoundaryCondition,
    right: BoundaryCondition,
    z: C64,
    y: i64,
) -> Result<Vec<C64>> {
    near_eigenvalue_check(source, window, left, right, z)?;
    let mut k = lm_factors(source, window, left, right).pencil(z);
    std::mem::swap(&mut k.sub, &mut k.sup);
    k.solve(&unit(window.len(), window.offset(y))).ok_or(CmvError::NearEigenvalue { relative: 0.0 })
}

/// Boundary data `(r_a, r_b)` for which a solution `Ψ` of the full-line
/// equation satisfies `Ψ(y) = G(y, a) r_a + G(y, b) r_b` on `Λ = [a, b]`:
///
/// * `a` even: `r_a = (β1 - α_{a-1}) Ψ(a) + conj(ρ_{a-1}) Ψ(a-1)`
/// * `a` odd: `r_a = z (conj α_{a-1} - conj β1) Ψ(a) - z conj(ρ_{a-1}) Ψ(a-1)`
/// * `b` even: `r_b = z (β2 - α_b) Ψ(b) - z ρ_b Ψ(b+1)`
/// * `b` odd: `r_b = (conj α_b - conj β2) Ψ(b) + ρ_b Ψ(b+1)`
pub fn sol_green_boundary_terms(
    source: &CoefficientSource,
    window: IndexWindow,
    beta1: C64,
    beta2: C64,
    z: C64,
    psi: &dyn Fn(i64) -> C64,
) -> (C64, C64) {
    let (a, b) = (window.a, window.b);
    let pa = source.pair_at(a - 1);
    let pb = source.pair_at(b);
    let ra = if a.rem_euclid(2) == 0 {
        (beta1 - pa.alpha) * psi(a) + pa.rho.conj() * psi(a - 1)
    } else {
        z * (pa.alpha.conj() - beta1.conj()) * psi(a) - z * pa.rho.conj() * psi(a - 1)
    };
    let rb = if b.rem_euclid(2) == 0 {
        z * (beta2 - pb.alpha) * psi(b) - z * pb.rho * psi(b + 1)
    } else {
        (pb.alpha.conj() - beta2.conj()) * psi(b) + pb.rho * psi(b + 1)
    };
    (ra, rb)
}

/// A solution of `E u = z u` on `[lo, hi]` (full-line rows), propagated
/// with the transfer matrices from `(u_{2m-1}, u_{2m-2}) = init` where
/// `2m - 2 = lo` rounded down to even.
pub fn generalized_eigenfunction(
    source: &CoefficientSource,
    z: C64,
    lo: i64,
    hi: i64,
    init: [C64; 2],
) -> Result<Vec<C64>> {
    let start = lo - lo.rem_euclid(2);
    let m0 = (start + 2) / 2;
    let mut vals = std::collections::BTreeMap::new();
    vals.insert(2 * m0 - 1, init[0]);
    vals.insert(2 * m0 - 2, init[1]);
    let mut m = m0;
    let mut cur = init;
    while 2 * m <= hi + 1 {
        let a = crate::cocycle::transfer_matrix(source, m, z)?;
        cur = a.apply(cur);
        vals.insert(2 * m + 1, cur[0]);
        vals.insert(2 * m, cur[1]);
        m += 1;
    }
    Ok((lo..=hi).map(|n| vals[&n]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileMethod {
    Shooting,
    InverseIteration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenfunctionProfile {
    pub window: IndexWindow,
    /// Unit 2-norm.
    pub values: Vec<C64>,
    pub angle: f64,
    /// `||E u - e^{it} u|| / ||u||`.
    pub residual: f64,
    pub method: ProfileMethod,
}

impl EigenfunctionProfile {
    /// Builds a profile from raw values (normalized here); the residual is
    /// left at 0 for synthetic data.
    pub fn from_values(window: IndexWindow, values: Vec<C64>, angle: f64) -> Self {
        let nrm = norm(&values);
        EigenfunctionProfile {
            window,
            values: values.iter().map(|v| v / nrm).collect(),
            angle,
            residual: 0.0,
            method: ProfileMethod::Shooting,
        }
    }

    pub fn peak(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Shooting residual above which inverse iteration takes over.
pub const SHOOTING_TOL: f64 = 1e-10;

/// Final residual above which the angle is rejected.
pub const EIGEN_TOL: f64 = 1e-6;

fn residual_of(op: &crate::operators::FiniteOperator, u: &[C64], z: C64) -> f64 {
    let eu = op.matvec(u);
    let r: f64 = eu.iter().zip(u).map(|(a, b)| (a - z * b).norm_sqr()).sum::<f64>().sqrt();
    r / norm(u)
}

/// Up to four steps of inverse iteration with shift `z (1 + 1e-12)` from a
/// fixed generic start vector. Returns the unit vector and its residual.
fn inverse_iterate(factors: &LmFactors, op: &crate::operators::FiniteOperator, z: C64) -> Option<(Vec<C64>, f64)> {
    let n = factors.window.len();
    let kk = factors.pencil(z * (1.0 + 1e-12));
    let mut x: Vec<C64> = (0..n).map(|i| C64::from_polar(1.0, 2.399_963 * i as f64)).collect();
    let mut res = f64::INFINITY;
    for _ in 0..4 {
        let rhs = l_adjoint_apply(factors, &x);
        let sol = kk.solve(&rhs)?;
        let nrm = norm(&sol);
        if !(nrm.is_finite() && nrm > 0.0) {
            return None;
        }
        x = sol.iter().map(|v| -v / nrm).collect();
        res = residual_of(op, &x, z);
        if res < 1e-12 {
            break;
        }
    }
    Some((x, res))
}

fn l_adjoint_apply(f: &LmFactors, b: &[C64]) -> Vec<C64> {
    let w = f.window;
    w.indices()
        .map(|m| {
            let j = m - m.rem_euclid(2);
            (j..=j + 1)
                .filter(|l| w.contains(*l))
                .map(|l| f.l_entry(l, m).conj() * b[w.offset(l)])
                .sum()
        })
        .collect()
}

/// Eigenvector of `E_Λ` at `e^{it}`: three-term recursion of
/// `(z L^* - M) u = 0` from the left end, falling back to two steps of
/// inverse iteration (shift `z (1 + 1e-12)`) when the shooting residual
/// exceeds [`SHOOTING_TOL`].
pub fn eigenvector_shooting(
    source: &CoefficientSource,
    window: IndexWindow,
    angle: f64,
    left: BoundaryCondition,
    right: BoundaryCondition,
) -> Result<EigenfunctionProfile> {
    let z = C64::from_polar(1.0, angle);
    let factors = lm_factors(source, window, left, right);
    let op = factors.to_operator(left, right);
    let k = factors.pencil(z);
    let n = window.len();
    let mut u = vec![ZERO; n];
    u[0] = ONE;
    let mut ok = true;
    for i in 0..n - 1 {
        let prev = if i > 0 { k.sub[i - 1] * u[i - 1] } else { ZERO };
        if k.sup[i].norm() < 1e-300 {
            ok = false;
            break;
        }
        u[i + 1] = -(prev + k.diag[i] * u[i]) / k.sup[i];
        let m = u[i + 1].norm();
        if !m.is_finite() {
            ok = false;
            break;
        }
        if m > 1e150 {
            for x in u.iter_mut().take(i + 2) {
                *x /= m;
            }
        }
    }
    let shoot_res = if ok { residual_of(&op, &u, z) } else { f64::INFINITY };
    if shoot_res.is_finite() && shoot_res <= SHOOTING_TOL {
        let nrm = norm(&u);
        u.iter_mut().for_each(|x| *x /= nrm);
        return Ok(EigenfunctionProfile { window, values: u, angle, residual: shoot_res, method: ProfileMethod::Shooting });
    }
    let (x, res) = inverse_iterate(&factors, &op, z).ok_or(CmvError::ShootingUnstable { residual: shoot_res })?;
    if !(res <= EIGEN_TOL) {
        return Err(CmvError::NotAnEigenvalue { residual: res });
    }
    Ok(EigenfunctionProfile { window, values: x, angle, residual: res, method: ProfileMethod::InverseIteration })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularity {
    /// Witness interval `[n1, n2]`.
    Regular { n1: i64, n2: i64 },
    Singular,
}

/// Looks for `[n1, n2]` with `n2 - n1 = kbar`, `y` inside,
/// `|y - n_i| >= kbar / 7` and `|G_{[n1,n2]}(y, n_i)| < e^{-γ |y - n_i|}`.
/// Sub-windows where `z` is an eigenvalue are skipped.
pub fn regularity_test(
    source: &CoefficientSource,
    z: C64,
    y: i64,
    gamma: f64,
    kbar: usize,
    left: BoundaryCondition,
    right: BoundaryCondition,
) -> Result<Regularity> {
    if kbar < 14 {
        return Err(CmvError::InvalidParameter(format!("kbar = {kbar} is below 14")));
    }
    let k = kbar as i64;
    let margin = (k + 6) / 7;
    for n1 in (y - k + margin)..=(y - margin) {
        let n2 = n1 + k;
        let w = IndexWindow::new(n1, n2)?;
        let row = match green_row(source, w, left, right, z, y) {
            Ok(r) => r,
            Err(CmvError::NearEigenvalue { .. }) => continue,
            Err(e) => return Err(e),
        };
        let g1 = row[0].norm();
        let g2 = row[row.len() - 1].norm();
        if g1 < (-gamma * (y - n1) as f64).exp() && g2 < (-gamma * (n2 - y) as f64).exp() {
            return Ok(Regularity::Regular { n1, n2 });
        }
    }
    Ok(Regularity::Singular)
}

/// `(1/n) Σ_{j=0}^{n-1} log|ρ_j|`.
pub fn rho_product_rate(source: &CoefficientSource, n: usize) -> Result<f64> {
    if n < 4 {
        return Err(CmvError::InvalidParameter(format!("n = {n} is below 4")));
    }
    Ok(log_rho(source, 0, n as i64 - 1)? / n as f64)
}

/// Max over `θ` in the grid of `|Γ(θ) - Γ(-θ)|`, where `Γ(θ)` is
/// `det(z - E_{[1,4k-2]})` for the source at phase `θ + 1/4 - kΦ` with
/// boundary phases `β1` and `conj β1`.
pub fn char_poly_evenness(
    source: &CoefficientSource,
    k: i64,
    z: C64,
    theta_grid: &[f64],
    beta1: C64,
) -> Result<f64> {
    if k < 1 {
        return Err(CmvError::InvalidParameter("k must be at least 1".into()));
    }
    let phi = source
        .params()
        .ok_or_else(|| CmvError::InvalidParameter("evenness needs a phase-parameterized source".into()))?
        .phi;
    let window = IndexWindow::new(1, 4 * k - 2)?;
    let left = BoundaryCondition::phase(beta1)?;
    let right = BoundaryCondition::Phase(beta1.conj());
    let base = 0.25 - k as f64 * phi;
    let mut worst: f64 = 0.0;
    for &th in theta_grid {
        let d1 = raw_det(&source.with_theta(base + th), window.a, window.b, left, right, z).0.value();
        let d2 = raw_det(&source.with_theta(base - th), window.a, window.b, left, right, z).0.value();
        worst = worst.max((d1 - d2).norm());
    }
    Ok(worst)
}

/// Dense `det(z - E)` helper shared by tests and the verify suite.
pub fn dense_char_poly(
    source: &CoefficientSource,
    window: IndexWindow,
    left: BoundaryCondition,
    right: BoundaryCondition,
    z: C64,
) -> Result<C64> {
    let op = assemble_finite(source, window, left, right)?;
    let n = op.len();
    let m = nalgebra::DMatrix::<C64>::identity(n, n) * z - op.to_dense();
    Ok(m.determinant())
}

/// Angle distance re-exported for callers comparing spectra.
pub fn circle_distance(a: f64, b: f64) -> f64 {
    angle_distance(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{VerblunskyPair, GOLDEN};

    fn mosaic() -> CoefficientSource {
        CoefficientSource::mosaic(MosaicParams::golden(0.6, 0.8, 0.13).unwrap())
    }

    #[test]
    fn char_poly_matches_dense() {
        let src = mosaic();
        for (a, b) in [(0, 5), (1, 6), (-3, 4), (2, 3)] {
            let w = IndexWindow::new(a, b).unwrap();
            for (l, r) in [
                (BoundaryCondition::angle(0.7), BoundaryCondition::angle(2.1)),
                (BoundaryCondition::Open, BoundaryCondition::angle(2.1)),
                (BoundaryCondition::angle(0.7), BoundaryCondition::Open),
                (BoundaryCondition::Open, BoundaryCondition::Open),
            ] {
                let z = C64::from_polar(1.0, 1.3);
                let p = char_poly(&src, w, l, r, z).unwrap();
                let d = dense_char_poly(&src, w, l, r, z).unwrap();
                assert!((p.raw_det - d).norm() < 1e-12 * (1.0 + d.norm()), "{a} {b} {l:?} {r:?}");
            }
        }
    }

    #[test]
    fn spectrum_counts_and_residuals() {
        let src = mosaic();
        let w = IndexWindow::new(-5, 30).unwrap();
        let s = truncation_spectrum(&src, w, C64::from_polar(1.0, 0.3), C64::from_polar(1.0, 1.9)).unwrap();
        assert_eq!(s.count, 36);
        assert!(s.residual < 1e-9, "{:?}", s.residuals);
        assert!(s.angles.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn free_spectrum_plane_wave() {
        let src = CoefficientSource::explicit(0, vec![VerblunskyPair::free(); 0]);
        let w = IndexWindow::new(0, 15).unwrap();
        let s = truncation_spectrum(&src, w, ONE, ONE).unwrap();
        let prof = eigenvector_shooting(&src, w, s.angles[3], BoundaryCondition::Phase(ONE), BoundaryCondition::Phase(ONE))
            .unwrap();
        let m = prof.values[0].norm();
        assert!(prof.values.iter().all(|v| (v.norm() - m).abs() < 1e-10));
    }

    #[test]
    fn green_quotient() {
        let src = mosaic();
        let w = IndexWindow::new(-3, 8).unwrap();
        let (l, r) = (BoundaryCondition::angle(0.7), BoundaryCondition::angle(2.1));
        let z = C64::from_polar(1.0, 1.3);
        for x in w.indices() {
            for y in w.indices() {
                let g = greens_function(&src, w, l, r, z, x, y).unwrap();
                assert!(g.defect < 1e-8, "{x} {y} {}", g.defect);
            }
        }
    }

    #[test]
    fn rho_rate_periodic() {
        let p = MosaicParams::new(0.5, 0.0, GOLDEN, 0.2, 2).unwrap();
        let r = rho_product_rate(&CoefficientSource::mosaic(p), 1000).unwrap();
        assert!((r - 0.5f64.ln() / 2.0).abs() < 1e-14);
    }
}
