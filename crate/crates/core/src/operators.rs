//! Finite GECMV truncations, the split-step walk, gauge transformations
//! (including the phase-twisted "super" variant) and reflections.

use crate::error::{CmvError, Result};
use crate::linalg::{Mat2, Tridiagonal};
use crate::model::{coin_at, CoefficientSource, MosaicParams, VerblunskyPair, PAIR_TOL};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance for unit-modulus inputs.
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// Replace the boundary `alpha` by a unimodular `beta`.
    Phase(C64),
    /// Keep the original `alpha` (plain projection, not unitary).
    Open,
}

impl BoundaryCondition {
    pub fn phase(beta: C64) -> Result<Self> {
        let modulus = beta.norm();
        if !((modulus - 1.0).abs() <= UNIT_TOL) {
            return Err(CmvError::NotOnUnitCircle { modulus });
        }
        Ok(BoundaryCondition::Phase(beta))
    }

    /// `Phase(e^{i t})`.
    pub fn angle(t: f64) -> Self {
        BoundaryCondition::Phase(C64::from_polar(1.0, t))
    }

    pub fn beta(&self) -> Option<C64> {
        match self {
            BoundaryCondition::Phase(b) => Some(*b),
            BoundaryCondition::Open => None,
        }
    }

    pub fn is_phase(&self) -> bool {
        matches!(self, BoundaryCondition::Phase(_))
    }
}

impl Default for BoundaryCondition {
    fn default() -> Self {
        BoundaryCondition::Phase(ONE)
    }
}

/// Inclusive lattice window `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexWindow {
    pub a: i64,
    pub b: i64,
}

impl IndexWindow {
    pub fn new(a: i64, b: i64) -> Result<Self> {
        if b < a + 1 {
            return Err(CmvError::WindowTooSmall { a, b });
        }
        Ok(IndexWindow { a, b })
    }

    /// `[first, first + len - 1]`.
    pub fn with_len(first: i64, len: usize) -> Result<Self> {
        IndexWindow::new(first, first + len as i64 - 1)
    }

    pub fn len(&self) -> usize {
        (self.b - self.a + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: i64) -> bool {
        self.a <= n && n <= self.b
    }

    /// Position of lattice index `n` inside the window.
    pub fn offset(&self, n: i64) -> usize {
        debug_assert!(self.contains(n));
        (n - self.a) as usize
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<i64> {
        self.a..=self.b
    }
}

/// `[[conj alpha, rho], [conj rho, -alpha]]`.
pub fn theta_block(pair: VerblunskyPair) -> Mat2 {
    let VerblunskyPair { alpha, rho } = pair;
    Mat2::new(alpha.conj(), rho, rho.conj(), -alpha)
}

/// The two block-diagonal factors of a truncation: `blocks[k]` is the
/// 2x2 block at lattice index `a - 1 + k`, covering rows and columns
/// `{j, j + 1}`. Even `j` belong to `L`, odd `j` to `M`. Entries outside
/// the window are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct LmFactors {
    pub window: IndexWindow,
    pub blocks: Vec<Mat2>,
}

impl LmFactors {
    pub fn block(&self, j: i64) -> &Mat2 {
        &self.blocks[(j - self.window.a + 1) as usize]
    }

    /// Entry `(m, n)` of `L` (`parity = 0`) or `M` (`parity = 1`).
    pub fn factor_entry(&self, parity: i64, m: i64, n: i64) -> C64 {
        let w = &self.window;
        if !w.contains(m) || !w.contains(n) {
            return ZERO;
        }
        let j = m - (m - parity).rem_euclid(2);
        if n < j || n > j + 1 {
            return ZERO;
        }
        self.block(j).m[(m - j) as usize][(n - j) as usize]
    }

    pub fn l_entry(&self, m: i64, n: i64) -> C64 {
        self.factor_entry(0, m, n)
    }

    pub fn m_entry(&self, m: i64, n: i64) -> C64 {
        self.factor_entry(1, m, n)
    }

    /// Entry `(m, n)` of the product `L M`.
    pub fn product_entry(&self, m: i64, n: i64) -> C64 {
        let j = m - m.rem_euclid(2);
        (j..=j + 1).map(|l| self.l_entry(m, l) * self.m_entry(l, n)).sum()
    }

    /// The tridiagonal pencil `z L^* - M` on the window.
    pub fn pencil(&self, z: C64) -> Tridiagonal {
        let w = self.window;
        let n = w.len();
        let mut t = Tridiagonal::zeros(n);
        for i in 0..n {
            let m = w.a + i as i64;
            t.diag[i] = z * self.l_entry(m, m).conj() - self.m_entry(m, m);
            if i + 1 < n {
                t.sup[i] = z * self.l_entry(m + 1, m).conj() - self.m_entry(m, m + 1);
                t.sub[i] = z * self.l_entry(m, m + 1).conj() - self.m_entry(m + 1, m);
            }
        }
        t
    }

    pub fn to_operator(&self, left: BoundaryCondition, right: BoundaryCondition) -> FiniteOperator {
        let w = self.window;
        let mut band = vec![[ZERO; 5]; w.len()];
        for (i, row) in band.iter_mut().enumerate() {
            let m = w.a + i as i64;
            for (k, e) in row.iter_mut().enumerate() {
                let n = m + k as i64 - 2;
                if w.contains(n) {
                    *e = self.product_entry(m, n);
                }
            }
        }
        FiniteOperator { window: w, band, left_bc: left, right_bc: right, unitary: left.is_phase() && right.is_phase() }
    }
}

/// A five-diagonal operator on an index window. `band[i][k]` is the entry
/// at position `(i, i + k - 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteOperator {
    pub window: IndexWindow,
    band: Vec<[C64; 5]>,
    pub left_bc: BoundaryCondition,
    pub right_bc: BoundaryCondition,
    pub unitary: bool,
}

impl FiniteOperator {
    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.band.is_empty()
    }

    /// Entry at positions `(i, j)`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let k = j as i64 - i as i64 + 2;
        if (0..5).contains(&k) && i < self.len() && j < self.len() {
            self.band[i][k as usize]
        } else {
            ZERO
        }
    }

    /// Entry at lattice indices `(m, n)`.
    pub fn entry(&self, m: i64, n: i64) -> C64 {
        if !self.window.contains(m) || !self.window.contains(n) {
            return ZERO;
        }
        self.get(self.window.offset(m), self.window.offset(n))
    }

    pub fn band(&self) -> &[[C64; 5]] {
        &self.band
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(2);
                let hi = (i + 2).min(n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// `max |(E^* E - 1)_{ij}|`, computed inside the band.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i.saturating_sub(4)..=(i + 4).min(n - 1) {
                let lo = i.max(j).saturating_sub(2);
                let hi = (i.min(j) + 2).min(n - 1);
                let mut s = ZERO;
                for k in lo..=hi {
                    s += self.get(k, i).conj() * self.get(k, j);
                }
                if i == j {
                    s -= ONE;
                }
                worst = worst.max(s.norm());
            }
        }
        worst
    }

    /// Largest `|i - j|` over nonzero entries.
    pub fn bandwidth(&self) -> usize {
        let mut w = 0;
        for (i, row) in self.band.iter().enumerate() {
            for (k, e) in row.iter().enumerate() {
                if *e != ZERO && i + k >= 2 && i + k - 2 < self.len() {
                    w = w.max((k as i64 - 2).unsigned_abs() as usize);
                }
            }
        }
        w
    }

    pub fn map_entries(&self, mut f: impl FnMut(i64, i64, C64) -> C64) -> FiniteOperator {
        let w = self.window;
        let mut out = self.clone();
        for (i, row) in out.band.iter_mut().enumerate() {
            for (k, e) in row.iter_mut().enumerate() {
                let m = w.a + i as i64;
                let n = m + k as i64 - 2;
                if w.contains(n) {
                    *e = f(m, n, *e);
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &FiniteOperator) -> f64 {
        assert_eq!(self.len(), other.len());
        self.band
            .iter()
            .zip(&other.band)
            .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// Text dump: a header `GECMV v1 n=<size>` followed by one
    /// `row col re im` line per nonzero entry (0-based positions).
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "GECMV v1 n={}", self.len())?;
        for i in 0..self.len() {
            for j in i.saturating_sub(2)..=(i + 2).min(self.len() - 1) {
                let e = self.get(i, j);
                if e != ZERO {
                    writeln!(out, "{} {} {:e} {:e}", i, j, e.re, e.im)?;
                }
            }
        }
        Ok(())
    }
}

fn checked_pair(p: VerblunskyPair, index: i64) -> Result<VerblunskyPair> {
    if !(p.defect() <= PAIR_TOL) {
        return Err(CmvError::NormConditionViolated { index, defect: p.defect() });
    }
    Ok(p)
}

/// The `L`/`M` factors of `E_Λ^{β1,β2}`: `alpha_{a-1}` and `alpha_b` are
/// replaced by the boundary phases, open ends keep the source values.
pub fn lm_factors(
    source: &CoefficientSource,
    window: IndexWindow,
    left: BoundaryCondition,
    right: BoundaryCondition,
) -> LmFactors {
    let blocks = (window.a - 1..=window.b)
        .map(|j| {
            let mut p = source.pair_at(j);
            if j == window.a - 1 {
                if let Some(b) = left.beta() {
                    p.alpha = b;
                }
            }
            if j == window.b {
                if let Some(b) = right.beta() {
                    p.alpha = b;
                }
            }
            theta_block(p)
        })
        .collect();
    LmFactors { window, blocks }
}

pub fn assemble_finite(
    source: &CoefficientSource,
    window: IndexWindow,
    left: BoundaryCondition,
    right: BoundaryCondition,
) -> Result<FiniteOperator> {
    let window = IndexWindow::new(window.a, window.b)?;
    Ok(lm_factors(source, window, left, right).to_operator(left, right))
}

/// The split-step walk `W = S_{λ1} Q` restricted to whole cells, with the
/// basis `δ_n^+ -> 2n - 1`, `δ_n^- -> 2n`. The window must start at an odd
/// index and end at an even one.
pub fn walk_matrix(params: &MosaicParams, window: IndexWindow) -> Result<FiniteOperator> {
    let (a, b) = (window.a, window.b);
    if a.rem_euclid(2) != 1 || b.rem_euclid(2) != 0 || b < a + 1 {
        return Err(CmvError::MisalignedWindow { a, b });
    }
    let lam = C64::new(params.lambda1, 0.0);
    let lamp = C64::new(params.lambda1p(), 0.0);
    let cell = |m: i64| (m + 1).div_euclid(2);
    let plus = |m: i64| m.rem_euclid(2) == 1;
    let pos = |n: i64, p: bool| if p { 2 * n - 1 } else { 2 * n };
    // S δ_n^± = λ δ_{n±1}^± ± λ' δ_n^∓
    let shift = |m: i64| -> [(i64, C64); 2] {
        let n = cell(m);
        if plus(m) {
            [(pos(n + 1, true), lam), (pos(n, false), lamp)]
        } else {
            [(pos(n - 1, false), lam), (pos(n, true), -lamp)]
        }
    };
    let w = window;
    let mut band = vec![[ZERO; 5]; w.len()];
    for col in w.indices() {
        let n = cell(col);
        let q = coin_at(params, n).entries;
        let c = if plus(col) { 0 } else { 1 };
        for (r, p) in [(0usize, true), (1usize, false)] {
            let coeff = q.m[r][c];
            if coeff == ZERO {
                continue;
            }
            for (row, s) in shift(pos(n, p)) {
                if w.contains(row) {
                    let i = w.offset(row);
                    let k = (col - row + 2) as usize;
                    band[i][k] += s * coeff;
                }
            }
        }
    }
    Ok(FiniteOperator {
        window: w,
        band,
        left_bc: BoundaryCondition::Open,
        right_bc: BoundaryCondition::Open,
        unitary: false,
    })
}

/// Diagonal unitary `D = diag(d_n)` over a lattice range.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeDiagonal {
    pub first: i64,
    pub d: Vec<C64>,
}

impl GaugeDiagonal {
    pub fn last(&self) -> i64 {
        self.first + self.d.len() as i64 - 1
    }

    pub fn at(&self, n: i64) -> C64 {
        self.d[(n - self.first) as usize]
    }

    /// `D_1 D_2`, on the common range.
    pub fn compose(&self, other: &GaugeDiagonal) -> GaugeDiagonal {
        let first = self.first.max(other.first);
        let last = self.last().min(other.last());
        GaugeDiagonal { first, d: (first..=last).map(|n| self.at(n) * other.at(n)).collect() }
    }

    pub fn adjoint(&self) -> GaugeDiagonal {
        GaugeDiagonal { first: self.first, d: self.d.iter().map(|x| x.conj()).collect() }
    }

    pub fn restrict(&self, window: IndexWindow) -> GaugeDiagonal {
        GaugeDiagonal { first: window.a, d: window.indices().map(|n| self.at(n)).collect() }
    }
}

fn check_unit(index: i64, x: C64) -> Result<C64> {
    let modulus = x.norm();
    if !((modulus - 1.0).abs() <= UNIT_TOL) {
        return Err(CmvError::NonUnimodularInput { index, modulus });
    }
    Ok(x)
}

/// Runs the gauge recursion on `[lo, hi]` (which must contain `-1` and `0`)
/// with an extra twist `e^{i phi_n}` per site; `phi = 0` is the plain
/// recursion that strips the `rho` phases.
fn gauge_recursion(
    xi: &dyn Fn(i64) -> C64,
    phi: &dyn Fn(i64) -> f64,
    lo: i64,
    hi: i64,
    d0: C64,
    dm1: C64,
) -> Result<GaugeDiagonal> {
    debug_assert!(lo <= -1 && hi >= 0);
    let mut xs = std::collections::HashMap::new();
    let mut x = |n: i64| -> Result<C64> {
        if let Some(v) = xs.get(&n) {
            return Ok(*v);
        }
        let v = check_unit(n, xi(n))?;
        xs.insert(n, v);
        Ok(v)
    };
    let e = |s: f64| C64::from_polar(1.0, s);
    let len = (hi - lo + 1) as usize;
    let mut d = vec![ZERO; len];
    let at = |n: i64| (n - lo) as usize;
    d[at(0)] = check_unit(0, d0)?;
    d[at(-1)] = check_unit(-1, dm1)?;
    let mut k = 0;
    while 2 * k + 2 <= hi || 2 * k + 1 <= hi {
        if 2 * k + 2 <= hi {
            d[at(2 * k + 2)] =
                d[at(2 * k)] * e(-(phi(2 * k + 1) + phi(2 * k))) / (x(2 * k + 1)? * x(2 * k)?);
        }
        if 2 * k + 1 <= hi {
            d[at(2 * k + 1)] =
                d[at(2 * k - 1)] * e(phi(2 * k) + phi(2 * k - 1)) / (x(2 * k - 1)? * x(2 * k)?);
        }
        k += 1;
    }
    let mut k = 0;
    while 2 * k - 2 >= lo || 2 * k - 3 >= lo {
        if 2 * k - 2 >= lo {
            d[at(2 * k - 2)] =
                d[at(2 * k)] * x(2 * k - 1)? * x(2 * k - 2)? * e(phi(2 * k - 1) + phi(2 * k - 2));
        }
        if 2 * k - 3 >= lo {
            d[at(2 * k - 3)] =
                d[at(2 * k - 1)] * x(2 * k - 3)? * x(2 * k - 2)? * e(-(phi(2 * k - 2) + phi(2 * k - 3)));
        }
        k -= 1;
    }
    Ok(GaugeDiagonal { first: lo, d })
}

/// The recursion `d_{2n+2} = d_{2n} / (ξ_{2n+1} ξ_{2n})`,
/// `d_{2n+1} = d_{2n-1} / (ξ_{2n-1} ξ_{2n})` seeded with `d_0`, `d_{-1}`,
/// returned on `window`. With `d_{-1} = d_0 ξ_{-1}` the conjugation
/// `D^* E^ξ D` is the standard extended CMV matrix with the same alphas
/// and `rho = |rho|`.
pub fn gauge_diagonal(
    xi: &dyn Fn(i64) -> C64,
    window: IndexWindow,
    d0: C64,
    dm1: C64,
) -> Result<GaugeDiagonal> {
    let lo = (window.a - 1).min(-1);
    let hi = window.b.max(0);
    Ok(gauge_recursion(xi, &|_| 0.0, lo, hi, d0, dm1)?.restrict(window))
}

/// The alpha-fixing gauge: `d_0 = 1`, `d_{-1} = ξ_{-1}`.
pub fn gauge_to_standard(xi: &dyn Fn(i64) -> C64, window: IndexWindow) -> Result<GaugeDiagonal> {
    let x = check_unit(-1, xi(-1))?;
    gauge_diagonal(xi, window, ONE, x)
}

/// `D = D_ζ D_ξ^*`, so that `D^* E^ζ D = E^ξ` for two GECMV matrices with
/// the same alphas and `rho_n = ξ_n |rho_n|` resp. `ζ_n |rho_n|`.
pub fn gauge_between(
    xi: &dyn Fn(i64) -> C64,
    zeta: &dyn Fn(i64) -> C64,
    window: IndexWindow,
) -> Result<GaugeDiagonal> {
    let dx = gauge_to_standard(xi, window)?;
    let dz = gauge_to_standard(zeta, window)?;
    Ok(dz.compose(&dx.adjoint()))
}

/// Phases `rho_n / |rho_n|` of a source (1 where `rho` vanishes).
pub fn rho_phases(source: &CoefficientSource) -> impl Fn(i64) -> C64 + '_ {
    move |n| {
        let r = source.rho_at(n);
        if r.norm() == 0.0 {
            ONE
        } else {
            r / r.norm()
        }
    }
}

/// `D^* E D` for a diagonal unitary `D` covering the window.
pub fn conjugate(op: &FiniteOperator, gauge: &GaugeDiagonal) -> FiniteOperator {
    op.map_entries(|m, n, e| gauge.at(m).conj() * e * gauge.at(n))
}

/// One site of a phase-twisted ("super") CMV matrix: the block is
/// `e^{i phi} Θ(alpha, rho)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuperPair {
    pub pair: VerblunskyPair,
    pub phi: f64,
}

/// Explicit list of twisted pairs starting at `first`; other indices carry
/// `(0, 1)` with no twist.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperSource {
    pub first: i64,
    pub pairs: Vec<SuperPair>,
}

impl SuperSource {
    pub fn new(first: i64, pairs: Vec<SuperPair>) -> Result<Self> {
        for (k, p) in pairs.iter().enumerate() {
            checked_pair(p.pair, first + k as i64)?;
            if !p.phi.is_finite() {
                return Err(CmvError::InvalidParameter(format!("phase at {} is not finite", first + k as i64)));
            }
        }
        Ok(SuperSource { first, pairs })
    }

    pub fn at(&self, n: i64) -> SuperPair {
        let k = n - self.first;
        if k >= 0 && (k as usize) < self.pairs.len() {
            self.pairs[k as usize]
        } else {
            SuperPair { pair: VerblunskyPair::free(), phi: 0.0 }
        }
    }

    /// Truncation with twisted blocks; boundary phases replace the alphas
    /// at `a - 1` and `b` as in the untwisted case.
    pub fn assemble(
        &self,
        window: IndexWindow,
        left: BoundaryCondition,
        right: BoundaryCondition,
    ) -> Result<FiniteOperator> {
        let window = IndexWindow::new(window.a, window.b)?;
        let blocks = (window.a - 1..=window.b)
            .map(|j| {
                let mut s = self.at(j);
                if j == window.a - 1 {
                    if let Some(b) = left.beta() {
                        s.pair.alpha = b;
                    }
                }
                if j == window.b {
                    if let Some(b) = right.beta() {
                        s.pair.alpha = b;
                    }
                }
                theta_block(s.pair).scale(C64::from_polar(1.0, s.phi))
            })
            .collect();
        Ok(LmFactors { window, blocks }.to_operator(left, right))
    }
}

/// Output of [`sgecmv_gauge`]: `D^* E D` equals the untwisted truncation
/// of `source` (alphas multiplied by `multiplier`, `rho = |rho|`) with the
/// boundary phases mapped by [`SuperGauge::map_left`]/[`SuperGauge::map_right`].
#[derive(Clone, Debug)]
pub struct SuperGauge {
    pub gauge: GaugeDiagonal,
    pub source: CoefficientSource,
    /// `multiplier[k]` is the unimodular factor `alpha~_j / alpha_j` at
    /// `j = window.a - 1 + k`.
    pub multiplier: Vec<C64>,
    pub window: IndexWindow,
}

impl SuperGauge {
    fn factor(&self, j: i64) -> C64 {
        self.multiplier[(j - self.window.a + 1) as usize]
    }

    pub fn map_left(&self, bc: BoundaryCondition) -> BoundaryCondition {
        match bc {
            BoundaryCondition::Phase(b) => BoundaryCondition::Phase(self.factor(self.window.a - 1) * b),
            BoundaryCondition::Open => BoundaryCondition::Open,
        }
    }

    pub fn map_right(&self, bc: BoundaryCondition) -> BoundaryCondition {
        match bc {
            BoundaryCondition::Phase(b) => BoundaryCondition::Phase(self.factor(self.window.b) * b),
            BoundaryCondition::Open => BoundaryCondition::Open,
        }
    }
}

/// Gauge of a twisted CMV matrix onto a standard one. With `d_0`,
/// `d_{-1}` the seeds, the recursion is
/// `d_{2n+2} = d_{2n} e^{-i(φ_{2n+1}+φ_{2n})} / (ξ_{2n+1} ξ_{2n})`,
/// `d_{2n+1} = d_{2n-1} e^{+i(φ_{2n}+φ_{2n-1})} / (ξ_{2n-1} ξ_{2n})`,
/// and the new coefficients are
/// `α~_j = d_j conj(d_{j-1}) e^{-i(φ_j+φ_{j-1})} ξ_{j-1} α_j` (j even),
/// `α~_j = d_{j-1} conj(d_j) e^{-i(φ_{j-1}+φ_j)} conj(ξ_{j-1}) α_j` (j odd).
pub fn sgecmv_gauge(source: &SuperSource, window: IndexWindow, d0: C64, dm1: C64) -> Result<SuperGauge> {
    let window = IndexWindow::new(window.a, window.b)?;
    for j in window.a - 1..=window.b {
        checked_pair(source.at(j).pair, j)?;
    }
    let xi = |n: i64| {
        let r = source.at(n).pair.rho;
        if r.norm() == 0.0 {
            ONE
        } else {
            r / r.norm()
        }
    };
    let phi = |n: i64| source.at(n).phi;
    let lo = (window.a - 2).min(-1);
    let hi = window.b.max(0);
    let full = gauge_recursion(&xi, &phi, lo, hi, d0, dm1)?;
    let e = |s: f64| C64::from_polar(1.0, s);
    let multiplier: Vec<C64> = (window.a - 1..=window.b)
        .map(|j| {
            if j.rem_euclid(2) == 0 {
                full.at(j) * full.at(j - 1).conj() * e(-(phi(j) + phi(j - 1))) * xi(j - 1)
            } else {
                full.at(j - 1) * full.at(j).conj() * e(-(phi(j - 1) + phi(j))) * xi(j - 1).conj()
            }
        })
        .collect();
    let pairs = (window.a - 1..=window.b)
        .zip(&multiplier)
        .map(|(j, c)| {
            let p = source.at(j).pair;
            VerblunskyPair::new_unchecked(c * p.alpha, C64::new(p.rho.norm(), 0.0))
        })
        .collect();
    Ok(SuperGauge {
        gauge: full.restrict(window),
        source: CoefficientSource::explicit(window.a - 1, pairs),
        multiplier,
        window,
    })
}

/// `R_k E R_k` with `R_k: δ_n -> δ_{2k+1-n}`; needs `a + b = 2k + 1`.
pub fn reflect(op: &FiniteOperator, k: i64) -> Result<FiniteOperator> {
    let w = op.window;
    if w.a + w.b != 2 * k + 1 {
        return Err(CmvError::AsymmetricWindow { a: w.a, b: w.b, center: k as f64 + 0.5 });
    }
    let s = 2 * k + 1;
    let mut out = op.map_entries(|m, n, _| op.entry(s - m, s - n));
    out.left_bc = op.right_bc;
    out.right_bc = op.left_bc;
    Ok(out)
}

/// Max over the theta grid and `|n| <= n_max` of
/// `|α_{2c-n}(θ) - conj α_{2c+n}(-θ)|` and `|ρ_{2c-n}(θ) + conj ρ_{2c+n}(-θ)|`,
/// where the source is evaluated at phase `offset ± θ`.
pub fn reflection_symmetry_check(
    source: &CoefficientSource,
    c: f64,
    offset: f64,
    theta_grid: &[f64],
    n_max: i64,
) -> Result<f64> {
    let two_c = 2.0 * c;
    if two_c.fract() != 0.0 || !two_c.is_finite() {
        return Err(CmvError::InvalidParameter(format!("center {c} is not a half-integer")));
    }
    let two_c = two_c as i64;
    let mut worst: f64 = 0.0;
    for &th in theta_grid {
        let plus = source.with_theta(offset + th);
        let minus = source.with_theta(offset - th);
        for n in -n_max..=n_max {
            let p = plus.pair_at(two_c - n);
            let q = minus.pair_at(two_c + n);
            worst = worst.max((p.alpha - q.alpha.conj()).norm());
            worst = worst.max((p.rho + q.rho.conj()).norm());
        }
    }
    Ok(worst)
}

/// Reads back `(alpha_j, rho_j)` from a standard (real `rho`) extended CMV
/// truncation, using `E(2n, 2n+1) / E(2n, 2n+2) = conj α_{2n+1} / ρ_{2n+1}`
/// and `E(2n+1, 2n+2) / E(2n, 2n+2) = -α_{2n} / ρ_{2n}`. Only indices whose
/// three entries lie in the window are returned, in increasing order.
pub fn recover_coefficients(op: &FiniteOperator) -> Result<Vec<(i64, VerblunskyPair)>> {
    let w = op.window;
    let from_ratio = |r: C64| {
        let rho = 1.0 / (1.0 + r.norm_sqr()).sqrt();
        (r * rho, rho)
    };
    let mut out = Vec::new();
    let first_even = w.a + w.a.rem_euclid(2);
    let mut m = first_even;
    while m + 2 <= w.b {
        let pivot = op.entry(m, m + 2);
        if pivot.norm() < 1e-13 {
            return Err(CmvError::RecoveryIllConditioned { row: m, col: m + 2 });
        }
        let (neg_alpha, rho) = from_ratio(op.entry(m + 1, m + 2) / pivot);
        out.push((m, VerblunskyPair::new_unchecked(-neg_alpha, C64::new(rho, 0.0))));
        let (alpha_bar, rho) = from_ratio(op.entry(m, m + 1) / pivot);
        out.push((m + 1, VerblunskyPair::new_unchecked(alpha_bar.conj(), C64::new(rho, 0.0))));
        m += 2;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GOLDEN;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn theta_blocks() {
        let free = theta_block(VerblunskyPair::free());
        assert_eq!(free, Mat2::swap());
        let refl = theta_block(VerblunskyPair::new(c(1.0, 0.0), c(0.0, 0.0)).unwrap());
        assert_eq!(refl, Mat2::diag(c(1.0, 0.0), c(-1.0, 0.0)));
        let p = VerblunskyPair::new(c(0.3, 0.4), C64::from_polar(0.75f64.sqrt(), 1.1)).unwrap();
        let t = theta_block(p);
        assert!((t.det() + 1.0).norm() < 1e-14);
        assert!((t.adjoint() * t).max_abs_diff(&Mat2::identity()) < 1e-14);
    }

    #[test]
    fn interior_entry_pattern() {
        let p = MosaicParams::golden(0.6, 0.8, 0.13).unwrap();
        let src = CoefficientSource::mosaic(p);
        let op = assemble_finite(&src, IndexWindow::new(-5, 10).unwrap(), Default::default(), Default::default())
            .unwrap();
        for n in -1..4 {
            let (m, k) = (2 * n, 2 * n);
            let expect = -src.alpha_at(m).conj() * src.alpha_at(m - 1);
            assert!((op.entry(m, k) - expect).norm() < 1e-15);
            let expect = src.rho_at(m) * src.rho_at(m + 1);
            assert!((op.entry(m, m + 2) - expect).norm() < 1e-15);
        }
        assert!(op.unitarity_defect() < 1e-12);
        assert!(op.bandwidth() <= 2);
    }

    #[test]
    fn open_truncation_is_a_contraction() {
        let p = MosaicParams::golden(0.7, 0.7, 0.2).unwrap();
        let src = CoefficientSource::mosaic(p);
        let op = assemble_finite(&src, IndexWindow::new(0, 5).unwrap(), BoundaryCondition::Open, BoundaryCondition::Open)
            .unwrap();
        assert!(!op.unitary);
        let d = op.to_dense();
        for i in 0..6 {
            let s: f64 = (0..6).map(|j| d[(i, j)].norm_sqr()).sum();
            assert!(s <= 1.0 + 1e-12);
        }
        assert!(op.unitarity_defect() > 1e-3);
    }

    #[test]
    fn window_checks() {
        assert!(matches!(IndexWindow::new(3, 3), Err(CmvError::WindowTooSmall { .. })));
        let p = MosaicParams::golden(0.7, 0.7, 0.2).unwrap();
        assert!(matches!(walk_matrix(&p, IndexWindow::new(0, 5).unwrap()), Err(CmvError::MisalignedWindow { .. })));
        assert!(BoundaryCondition::phase(c(0.5, 0.0)).is_err());
    }

    #[test]
    fn walk_matches_gecmv_interior() {
        let p = MosaicParams::new(0.55, 0.8, GOLDEN, 0.31, 2).unwrap();
        let w = IndexWindow::new(-7, 12).unwrap();
        let walk = walk_matrix(&p, w).unwrap();
        let op = assemble_finite(&CoefficientSource::mosaic(p), w, BoundaryCondition::Open, BoundaryCondition::Open)
            .unwrap();
        for m in w.a + 2..=w.b - 2 {
            for n in w.a..=w.b {
                assert!((walk.entry(m, n) - op.entry(m, n)).norm() < 1e-14, "({m},{n})");
            }
        }
    }

    #[test]
    fn walk_without_coupling_is_block_diagonal() {
        let p = MosaicParams::new(0.0, 0.6, GOLDEN, 0.1, 2).unwrap();
        let w = IndexWindow::new(-3, 8).unwrap();
        let walk = walk_matrix(&p, w).unwrap();
        for m in w.indices() {
            for n in w.indices() {
                if (m + 1).div_euclid(2) != (n + 1).div_euclid(2) {
                    assert_eq!(walk.entry(m, n), ZERO);
                }
            }
        }
    }

    #[test]
    fn gauge_realifies() {
        let p = MosaicParams::golden(0.6, 0.8, 0.27).unwrap();
        let src = CoefficientSource::mosaic(p);
        let w = IndexWindow::new(-3, 8).unwrap();
        let bc = BoundaryCondition::angle(0.4);
        let op = assemble_finite(&src, w, bc, bc).unwrap();
        let xi = rho_phases(&src);
        let d = gauge_to_standard(&xi, w).unwrap();
        let conj = conjugate(&op, &d);
        let target = assemble_finite(&src.realified(), w, bc, bc).unwrap();
        assert!(conj.max_abs_diff(&target) < 1e-13);
        let rec = recover_coefficients(&conj).unwrap();
        for (j, q) in rec {
            assert!((q.alpha - src.alpha_at(j)).norm() < 1e-12, "{j}");
            assert!((q.rho.re - src.rho_at(j).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn sgecmv_zero_twist_matches_plain_gauge() {
        let p = MosaicParams::golden(0.6, 0.8, 0.27).unwrap();
        let src = CoefficientSource::mosaic(p);
        let w = IndexWindow::new(1, 9).unwrap();
        let sup = SuperSource::new(
            w.a - 2,
            src.pairs(w.a - 2, w.b + 1).into_iter().map(|pair| SuperPair { pair, phi: 0.0 }).collect(),
        )
        .unwrap();
        let xi = rho_phases(&src);
        let sg = sgecmv_gauge(&sup, w, ONE, xi(-1)).unwrap();
        let plain = gauge_to_standard(&xi, w).unwrap();
        for n in w.indices() {
            assert!((sg.gauge.at(n) - plain.at(n)).norm() < 1e-14);
        }
        for m in &sg.multiplier {
            assert!((m - ONE).norm() < 1e-13);
        }
    }

    #[test]
    fn reflection_is_an_involution() {
        let p = MosaicParams::golden(0.6, 0.8, 0.27).unwrap();
        let op = assemble_finite(
            &CoefficientSource::mosaic(p),
            IndexWindow::new(-4, 5).unwrap(),
            BoundaryCondition::angle(0.3),
            BoundaryCondition::angle(1.2),
        )
        .unwrap();
        let r = reflect(&op, 0).unwrap();
        assert!(r.bandwidth() <= 2);
        assert_eq!(reflect(&r, 0).unwrap(), op);
        assert!(matches!(reflect(&op, 1), Err(CmvError::AsymmetricWindow { .. })));
    }

    #[test]
    fn dump_format() {
        let op = assemble_finite(
            &CoefficientSource::explicit(0, vec![]),
            IndexWindow::new(0, 3).unwrap(),
            Default::default(),
            Default::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        op.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("GECMV v1 n=4"));
        assert_eq!(lines.count(), 4);
    }
}
