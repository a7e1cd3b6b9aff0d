//! Verblunsky coefficient sequences (mosaic walk, complexified twin,
//! explicit lists), walk coins and a few number-theoretic helpers.

use crate::error::{CmvError, Result};
use crate::linalg::Mat2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The golden mean `(sqrt(5) - 1) / 2`, the default frequency.
pub const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Tolerance for `|alpha|^2 + |rho|^2 = 1`.
pub const PAIR_TOL: f64 = 1e-12;

/// Fractional part in `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Distance to the nearest integer.
pub fn circle_dist(x: f64) -> f64 {
    let f = frac(x);
    f.min(1.0 - f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerblunskyPair {
    pub alpha: C64,
    pub rho: C64,
}

impl VerblunskyPair {
    pub fn new(alpha: C64, rho: C64) -> Result<Self> {
        let p = VerblunskyPair { alpha, rho };
        let defect = p.defect();
        if !(defect <= PAIR_TOL) {
            return Err(CmvError::NotVerblunsky { defect });
        }
        Ok(p)
    }

    /// Builds a pair without checking the norm condition.
    pub const fn new_unchecked(alpha: C64, rho: C64) -> Self {
        VerblunskyPair { alpha, rho }
    }

    /// The perfectly transmitting pair `(0, 1)`.
    pub const fn free() -> Self {
        VerblunskyPair::new_unchecked(C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    }

    pub fn defect(&self) -> f64 {
        (self.alpha.norm_sqr() + self.rho.norm_sqr() - 1.0).abs()
    }

    /// Same alpha, `rho` replaced by `|rho|`.
    pub fn realified(&self) -> Self {
        VerblunskyPair::new_unchecked(self.alpha, C64::new(self.rho.norm(), 0.0))
    }
}

/// Parameters of the mosaic walk. `phi` and `theta` are reduced mod 1
/// wherever they are used.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosaicParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub phi: f64,
    pub theta: f64,
    pub s: u32,
}

impl MosaicParams {
    pub fn new(lambda1: f64, lambda2: f64, phi: f64, theta: f64, s: u32) -> Result<Self> {
        for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CmvError::InvalidParameter(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        if !phi.is_finite() || !theta.is_finite() {
            return Err(CmvError::InvalidParameter("phi and theta must be finite".into()));
        }
        if s == 0 {
            return Err(CmvError::InvalidParameter("step size s must be at least 1".into()));
        }
        Ok(MosaicParams { lambda1, lambda2, phi, theta, s })
    }

    /// The `s = 2` model at the golden frequency.
    pub fn golden(lambda1: f64, lambda2: f64, theta: f64) -> Result<Self> {
        MosaicParams::new(lambda1, lambda2, GOLDEN, theta, 2)
    }

    pub fn lambda1p(&self) -> f64 {
        (1.0 - self.lambda1 * self.lambda1).max(0.0).sqrt()
    }

    pub fn lambda2p(&self) -> f64 {
        (1.0 - self.lambda2 * self.lambda2).max(0.0).sqrt()
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        MosaicParams { theta, ..*self }
    }

    /// Phase `theta + m * phi` of the `m`-th cell, reduced mod 1.
    pub fn cell_phase(&self, m: i64) -> f64 {
        frac(self.theta + frac(m as f64 * self.phi))
    }
}

/// The quasi-periodic pair `(l2 sin 2 pi x, l2 cos 2 pi x - i l2')`.
pub fn quasi_pair(lambda2: f64, lambda2p: f64, x: f64) -> VerblunskyPair {
    let (s, c) = (2.0 * PI * x).sin_cos();
    VerblunskyPair::new_unchecked(C64::new(lambda2 * s, 0.0), C64::new(lambda2 * c, -lambda2p))
}

/// Mosaic coefficients: `(lambda1', lambda1)` at even indices, the
/// quasi-periodic pair at `2m - 1` with `m` a multiple of `s`, and
/// `(0, -i)` at the remaining odd indices.
pub fn mosaic_pair_at(p: &MosaicParams, n: i64) -> VerblunskyPair {
    if n.rem_euclid(2) == 0 {
        return VerblunskyPair::new_unchecked(
            C64::new(p.lambda1p(), 0.0),
            C64::new(p.lambda1, 0.0),
        );
    }
    let m = (n + 1).div_euclid(2);
    if m.rem_euclid(p.s as i64) == 0 {
        quasi_pair(p.lambda2, p.lambda2p(), p.cell_phase(m))
    } else {
        VerblunskyPair::new_unchecked(C64::new(0.0, 0.0), C64::new(0.0, -1.0))
    }
}

/// Complexified twin: even-index `rho` multiplied by `i`.
pub fn twin_pair_at(p: &MosaicParams, n: i64) -> Result<VerblunskyPair> {
    if p.s != 2 {
        return Err(CmvError::TwinRequiresS2(p.s));
    }
    Ok(twin_rule(p, n))
}

fn twin_rule(p: &MosaicParams, n: i64) -> VerblunskyPair {
    let mut q = mosaic_pair_at(p, n);
    if n.rem_euclid(2) == 0 {
        q.rho *= C64::new(0.0, 1.0);
    }
    q
}

/// A deterministic map from lattice index to Verblunsky pair.
#[derive(Clone, Debug, PartialEq)]
pub enum CoefficientSource {
    Mosaic(MosaicParams),
    /// Built through [`CoefficientSource::twin`], which enforces `s = 2`.
    Twin(MosaicParams),
    /// `pairs[k]` sits at index `first + k`; every other index carries the
    /// free pair `(0, 1)`.
    Explicit { first: i64, pairs: Vec<VerblunskyPair> },
    /// The inner source with every `rho` replaced by `|rho|`.
    Realified(Box<CoefficientSource>),
}

impl CoefficientSource {
    pub fn mosaic(p: MosaicParams) -> Self {
        CoefficientSource::Mosaic(p)
    }

    /// The UAMO is the mosaic model with `s = 1`.
    pub fn uamo(p: MosaicParams) -> Self {
        CoefficientSource::Mosaic(MosaicParams { s: 1, ..p })
    }

    pub fn twin(p: MosaicParams) -> Result<Self> {
        if p.s != 2 {
            return Err(CmvError::TwinRequiresS2(p.s));
        }
        Ok(CoefficientSource::Twin(p))
    }

    pub fn explicit(first: i64, pairs: Vec<VerblunskyPair>) -> Self {
        CoefficientSource::Explicit { first, pairs }
    }

    pub fn realified(&self) -> Self {
        match self {
            CoefficientSource::Realified(_) => self.clone(),
            other => CoefficientSource::Realified(Box::new(other.clone())),
        }
    }

    pub fn pair_at(&self, n: i64) -> VerblunskyPair {
        match self {
            CoefficientSource::Mosaic(p) => mosaic_pair_at(p, n),
            CoefficientSource::Twin(p) => twin_rule(p, n),
            CoefficientSource::Explicit { first, pairs } => {
                let k = n - first;
                if k >= 0 && (k as usize) < pairs.len() {
                    pairs[k as usize]
                } else {
                    VerblunskyPair::free()
                }
            }
            CoefficientSource::Realified(inner) => inner.pair_at(n).realified(),
        }
    }

    pub fn alpha_at(&self, n: i64) -> C64 {
        self.pair_at(n).alpha
    }

    pub fn rho_at(&self, n: i64) -> C64 {
        self.pair_at(n).rho
    }

    /// Pairs for the inclusive index range `lo..=hi`.
    pub fn pairs(&self, lo: i64, hi: i64) -> Vec<VerblunskyPair> {
        (lo..=hi).map(|n| self.pair_at(n)).collect()
    }

    pub fn params(&self) -> Option<&MosaicParams> {
        match self {
            CoefficientSource::Mosaic(p) | CoefficientSource::Twin(p) => Some(p),
            CoefficientSource::Explicit { .. } => None,
            CoefficientSource::Realified(inner) => inner.params(),
        }
    }

    /// Same family at another phase; explicit lists are returned unchanged.
    pub fn with_theta(&self, theta: f64) -> Self {
        match self {
            CoefficientSource::Mosaic(p) => CoefficientSource::Mosaic(p.with_theta(theta)),
            CoefficientSource::Twin(p) => CoefficientSource::Twin(p.with_theta(theta)),
            CoefficientSource::Explicit { .. } => self.clone(),
            CoefficientSource::Realified(inner) => {
                CoefficientSource::Realified(Box::new(inner.with_theta(theta)))
            }
        }
    }
}

/// A local 2x2 walk coin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coin {
    pub entries: Mat2,
}

impl Coin {
    /// `Q = [[conj rho, -alpha], [conj alpha, rho]]`.
    pub fn from_pair(p: VerblunskyPair) -> Self {
        Coin { entries: Mat2::new(p.rho.conj(), -p.alpha, p.alpha.conj(), p.rho) }
    }

    /// Inverse of [`Coin::from_pair`].
    pub fn to_pair(&self) -> VerblunskyPair {
        VerblunskyPair::new_unchecked(-self.entries.m[0][1], self.entries.m[1][1])
    }

    pub fn unitarity_defect(&self) -> f64 {
        (self.entries.adjoint() * self.entries).max_abs_diff(&Mat2::identity())
    }
}

/// The coin of cell `n`, i.e. the pair at index `2n - 1`.
pub fn coin_at(p: &MosaicParams, n: i64) -> Coin {
    Coin::from_pair(mosaic_pair_at(p, 2 * n - 1))
}

/// `arccos(lambda1^2 lambda2' / (2 lambda1' lambda2))`.
pub fn mobility_edge_t0(lambda1: f64, lambda2: f64) -> Result<f64> {
    for (name, v) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(CmvError::DegenerateCoupling(format!("{name} = {v} must lie in (0, 1)")));
        }
    }
    let l1p = (1.0 - lambda1 * lambda1).sqrt();
    let l2p = (1.0 - lambda2 * lambda2).sqrt();
    let arg = lambda1 * lambda1 * l2p / (2.0 * l1p * lambda2);
    if arg >= 1.0 {
        return Err(CmvError::NoMobilityEdge {
            lhs: lambda1 * lambda1 / l1p,
            rhs: 2.0 * lambda2 / l2p,
        });
    }
    Ok(arg.acos())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergentList {
    pub value: f64,
    /// `(p_m, q_m)` with strictly increasing `q_m`.
    pub pairs: Vec<(i64, i64)>,
}

/// First `count` continued-fraction convergents of `phi`. When the first
/// two convergents share the denominator 1 only the better one is kept,
/// so the denominators are strictly increasing.
pub fn convergents(phi: f64, count: usize) -> Result<ConvergentList> {
    if !phi.is_finite() {
        return Err(CmvError::InvalidParameter("phi must be finite".into()));
    }
    let mut pairs: Vec<(i64, i64)> = Vec::with_capacity(count);
    let (mut p1, mut q1, mut p2, mut q2) = (1i64, 0i64, 0i64, 1i64);
    let mut x = phi;
    let mut terms = 0;
    while pairs.len() < count {
        let a = x.floor();
        if a.abs() > 1e15 {
            return Err(CmvError::RationalInput { terms });
        }
        let a = a as i64;
        let (p, q) = (a * p1 + p2, a * q1 + q2);
        terms += 1;
        match pairs.last() {
            Some(&(_, ql)) if ql == q => {
                *pairs.last_mut().unwrap() = (p, q);
            }
            _ => pairs.push((p, q)),
        }
        (p2, q2, p1, q1) = (p1, q1, p, q);
        let f = x - a as f64;
        let err = (phi - p as f64 / q as f64).abs();
        if pairs.len() < count && (f < 1e-12 || err <= 1e-15 * phi.abs().max(1.0)) {
            return Err(CmvError::RationalInput { terms });
        }
        x = 1.0 / f;
    }
    Ok(ConvergentList { value: phi, pairs })
}

/// All `|n| <= n_max` with `|sin 2 pi (theta + n phi)| < exp(-|n|^(1/(2 tau)))`.
pub fn resonance_scan(theta: f64, phi: f64, tau: f64, n_max: i64) -> Result<Vec<i64>> {
    if !(tau > 1.0) {
        return Err(CmvError::InvalidParameter(format!("tau = {tau} must exceed 1")));
    }
    if n_max < 1 {
        return Err(CmvError::InvalidParameter("n_max must be at least 1".into()));
    }
    let expo = 1.0 / (2.0 * tau);
    Ok((-n_max..=n_max)
        .filter(|&n| {
            let x = frac(theta + frac(n as f64 * phi));
            (2.0 * PI * x).sin().abs() < (-(n.unsigned_abs() as f64).powf(expo)).exp()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DiophantineReport {
    pub holds: bool,
    /// Index minimising `||n phi|| n^tau`, if any index was scanned.
    pub worst_index: Option<i64>,
    pub worst_value: f64,
}

/// Checks `||n phi|| >= kappa / n^tau` for `0 < n <= n_max` (negative `n`
/// give the same distances).
pub fn diophantine_check(phi: f64, kappa: f64, tau: f64, n_max: i64) -> Result<DiophantineReport> {
    if !(kappa > 0.0) {
        return Err(CmvError::InvalidParameter(format!("kappa = {kappa} must be positive")));
    }
    if !(tau > 1.0) {
        return Err(CmvError::InvalidParameter(format!("tau = {tau} must exceed 1")));
    }
    let mut worst: Option<(i64, f64)> = None;
    for n in 1..=n_max.max(0) {
        let v = circle_dist(n as f64 * phi) * (n as f64).powf(tau);
        if worst.map_or(true, |(_, w)| v < w) {
            worst = Some((n, v));
        }
    }
    Ok(match worst {
        None => DiophantineReport { holds: true, worst_index: None, worst_value: f64::INFINITY },
        Some((n, v)) => DiophantineReport { holds: v >= kappa, worst_index: Some(n), worst_value: v },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mosaic_inert_sites() {
        let p = MosaicParams::golden(0.7, 0.7, 0.0).unwrap();
        for k in -5..5 {
            let q = mosaic_pair_at(&p, 4 * k + 1);
            assert_eq!(q.alpha, C64::new(0.0, 0.0));
            assert_eq!(q.rho, C64::new(0.0, -1.0));
        }
    }

    #[test]
    fn mosaic_quasi_site_direct() {
        let p = MosaicParams::golden(0.6, 0.8, 0.1).unwrap();
        let q = mosaic_pair_at(&p, -1);
        let x = 2.0 * PI * 0.1;
        assert!((q.alpha - C64::new(0.8 * x.sin(), 0.0)).norm() < 1e-15);
        assert!((q.rho - C64::new(0.8 * x.cos(), -0.6)).norm() < 1e-15);
    }

    #[test]
    fn lambda2_zero_uamo_is_inert() {
        let p = MosaicParams::new(0.4, 0.0, GOLDEN, 0.3, 1).unwrap();
        for n in (-9..9).filter(|n| n % 2 != 0) {
            let q = mosaic_pair_at(&p, n);
            assert!(q.alpha.norm() < 1e-15);
            assert!((q.rho - C64::new(0.0, -1.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn twin_rules() {
        let p = MosaicParams::golden(0.7, 0.4, 0.2).unwrap();
        for n in -8..8 {
            let t = twin_pair_at(&p, n).unwrap();
            let m = mosaic_pair_at(&p, n);
            assert_eq!(t.alpha, m.alpha);
            if n % 2 == 0 {
                assert!((t.rho - C64::new(0.0, 0.7)).norm() < 1e-15);
            } else {
                assert_eq!(t.rho, m.rho);
            }
        }
        let p0 = MosaicParams::golden(0.0, 0.4, 0.2).unwrap();
        assert_eq!(twin_pair_at(&p0, 2).unwrap().rho.norm(), 0.0);
        assert_eq!(mosaic_pair_at(&p0, 2).rho.norm(), 0.0);
        let p3 = MosaicParams::new(0.7, 0.4, GOLDEN, 0.2, 3).unwrap();
        assert_eq!(twin_pair_at(&p3, 0), Err(CmvError::TwinRequiresS2(3)));
        assert!(CoefficientSource::twin(p3).is_err());
    }

    #[test]
    fn coins() {
        let p = MosaicParams::new(0.5, 0.6, GOLDEN, 0.3, 2).unwrap();
        let inert = coin_at(&p, 1);
        let i = C64::new(0.0, 1.0);
        assert!(inert.entries.max_abs_diff(&Mat2::diag(i, -i)) < 1e-15);
        let p1 = MosaicParams::new(0.5, 1.0, 0.0, 0.0, 2).unwrap();
        assert!(coin_at(&p1, 0).entries.max_abs_diff(&Mat2::identity()) < 1e-15);
        for n in -6..6 {
            let c = coin_at(&p, n);
            assert!(c.unitarity_defect() < 1e-12);
            assert!((c.entries.det() - 1.0).norm() < 1e-12);
            assert_eq!(c.to_pair(), mosaic_pair_at(&p, 2 * n - 1));
        }
    }

    #[test]
    fn t0_values() {
        let t0 = mobility_edge_t0(0.7, 0.7).unwrap();
        assert!((t0 - 0.35f64.acos()).abs() < 1e-14);
        assert!((t0 - 1.2132).abs() < 1e-4);
        assert!(matches!(mobility_edge_t0(0.99, 0.5), Err(CmvError::NoMobilityEdge { .. })));
        assert!(matches!(mobility_edge_t0(1.0, 0.5), Err(CmvError::DegenerateCoupling(_))));
        assert!(matches!(mobility_edge_t0(0.5, 0.0), Err(CmvError::DegenerateCoupling(_))));
        let small = mobility_edge_t0(1e-6, 1e-6).unwrap();
        assert!((small - PI / 2.0).abs() < 1e-5);
    }

    #[test]
    fn golden_convergents_are_fibonacci() {
        let c = convergents(GOLDEN, 12).unwrap();
        let qs: Vec<i64> = c.pairs.iter().map(|p| p.1).collect();
        assert_eq!(qs, vec![1, 2, 3, 5, 8, 13, 21, 34, 55, 89, 144, 233]);
        for &(p, q) in &c.pairs {
            assert!((GOLDEN - p as f64 / q as f64).abs() < 1.0 / (q * q) as f64);
        }
        assert!(matches!(convergents(1.0 / 3.0, 5), Err(CmvError::RationalInput { .. })));
    }

    #[test]
    fn resonance_and_diophantine() {
        assert!(resonance_scan(0.0, GOLDEN, 2.0, 10).unwrap().contains(&0));
        let k = 7;
        let theta = frac(-(k as f64) * GOLDEN);
        assert!(resonance_scan(theta, GOLDEN, 2.0, 20).unwrap().contains(&k));
        let d = diophantine_check(0.5, 0.1, 2.0, 10).unwrap();
        assert!(!d.holds);
        assert_eq!(d.worst_index, Some(2));
        let v = diophantine_check(GOLDEN, 0.1, 2.0, 0).unwrap();
        assert!(v.holds && v.worst_index.is_none());
    }
}
