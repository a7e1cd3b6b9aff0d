//! Small dense building blocks: a `Copy` 2x2 complex matrix and a
//! tridiagonal solver with partial pivoting.

use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Neg, Sub};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A 2x2 complex matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub m: [[C64; 2]; 2],
}

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2 { m: [[a, b], [c, d]] }
    }

    pub const fn identity() -> Self {
        Mat2::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Mat2::new(ZERO, ZERO, ZERO, ZERO)
    }

    /// The swap matrix `[[0, 1], [1, 0]]`.
    pub const fn swap() -> Self {
        Mat2::new(ZERO, ONE, ONE, ZERO)
    }

    pub fn diag(a: C64, d: C64) -> Self {
        Mat2::new(a, ZERO, ZERO, d)
    }

    pub fn det(&self) -> C64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    pub fn trace(&self) -> C64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Mat2::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Mat2::new(m[0][0], m[1][0], m[0][1], m[1][1])
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 || !d.is_finite() {
            return None;
        }
        let m = &self.m;
        Some(Mat2::new(m[1][1] / d, -m[0][1] / d, -m[1][0] / d, m[0][0] / d))
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.m;
        Mat2::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.m.iter().flatten().map(|x| x.norm_sqr()).sum()
    }

    /// Both singular values `(s_max, s_min)` in closed form.
    pub fn singular_values(&self) -> (f64, f64) {
        let f = self.frobenius_sq();
        let d = self.det().norm();
        let disc = (f * f - 4.0 * d * d).max(0.0).sqrt();
        let smax_sq = 0.5 * (f + disc);
        let smax = smax_sq.sqrt();
        let smin = if smax > 0.0 { d / smax } else { 0.0 };
        (smax, smin)
    }

    /// Operator 2-norm.
    pub fn norm(&self) -> f64 {
        self.singular_values().0
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|x| x.is_finite())
    }

    /// Checks `M^* sigma M = sigma` with `sigma = diag(1, -1)` and `det M = 1`.
    pub fn is_su11(&self, tol: f64) -> bool {
        let sigma = Mat2::diag(ONE, -ONE);
        let lhs = self.adjoint() * sigma * *self;
        lhs.max_abs_diff(&sigma) < tol && self.det_one(tol)
    }

    pub fn det_one(&self, tol: f64) -> bool {
        (self.det() - ONE).norm() < tol
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        let a = &self.m;
        let b = &o.m;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        let a = &self.m;
        let b = &o.m;
        Mat2::new(a[0][0] + b[0][0], a[0][1] + b[0][1], a[1][0] + b[1][0], a[1][1] + b[1][1])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        self + (-o)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale_re(-1.0)
    }
}

/// Tridiagonal matrix `sub[i] = T[i+1][i]`, `diag[i] = T[i][i]`,
/// `sup[i] = T[i][i+1]`.
#[derive(Clone, Debug)]
pub struct Tridiagonal {
    pub sub: Vec<C64>,
    pub diag: Vec<C64>,
    pub sup: Vec<C64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            sub: vec![ZERO; n.saturating_sub(1)],
            diag: vec![ZERO; n],
            sup: vec![ZERO; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let n = self.len();
        let mut y = vec![ZERO; n];
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.sup[i] * x[i + 1];
            }
            y[i] = acc;
        }
        y
    }

    /// Gaussian elimination with partial pivoting (the LAPACK `gtsv`
    /// scheme). Returns `None` when a pivot vanishes exactly.
    pub fn solve(&self, rhs: &[C64]) -> Option<Vec<C64>> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return Some(Vec::new());
        }
        let mut dl = self.sub.clone();
        let mut d = self.diag.clone();
        let mut du = self.sup.clone();
        let mut b = rhs.to_vec();
        let cabs1 = |x: C64| x.re.abs() + x.im.abs();
        for k in 0..n - 1 {
            if dl[k] == ZERO {
                if d[k] == ZERO {
                    return None;
                }
            } else if cabs1(d[k]) >= cabs1(dl[k]) {
                let mult = dl[k] / d[k];
                d[k + 1] -= mult * du[k];
                b[k + 1] = b[k + 1] - mult * b[k];
                if k + 1 < n - 1 {
                    dl[k] = ZERO;
                }
            } else {
                let mult = d[k] / dl[k];
                d[k] = dl[k];
                let temp = d[k + 1];
                d[k + 1] = du[k] - mult * temp;
                if k + 1 < n - 1 {
                    dl[k] = du[k + 1];
                    du[k + 1] = -mult * dl[k];
                }
                du[k] = temp;
                let tb = b[k];
                b[k] = b[k + 1];
                b[k + 1] = tb - mult * b[k + 1];
            }
        }
        if d[n - 1] == ZERO {
            return None;
        }
        b[n - 1] /= d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        }
        for k in (0..n.saturating_sub(2)).rev() {
            b[k] = (b[k] - du[k] * b[k + 1] - dl[k] * b[k + 2]) / d[k];
        }
        if b.iter().all(|x| x.is_finite()) {
            Some(b)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn norm_matches_power_iteration() {
        let a = Mat2::new(c(1.0, 2.0), c(-0.5, 0.1), c(3.0, -1.0), c(0.2, 0.7));
        let mut v = [c(1.0, 0.0), c(0.3, 0.1)];
        let ata = a.adjoint() * a;
        for _ in 0..200 {
            v = ata.apply(v);
            let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            v = [v[0] / n, v[1] / n];
        }
        let av = a.apply(v);
        let est = (av[0].norm_sqr() + av[1].norm_sqr()).sqrt();
        assert!((est - a.norm()).abs() < 1e-12);
        let (smax, smin) = a.singular_values();
        assert!((smax * smin - a.det().norm()).abs() < 1e-12);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = Mat2::new(c(1.0, 2.0), c(-0.5, 0.1), c(3.0, -1.0), c(0.2, 0.7));
        let p = a * a.inverse().unwrap();
        assert!(p.max_abs_diff(&Mat2::identity()) < 1e-14);
        assert!(Mat2::zero().inverse().is_none());
    }

    #[test]
    fn tridiagonal_solve_needs_pivoting() {
        // zero leading diagonal forces a row swap
        let t = Tridiagonal {
            sub: vec![c(1.0, 0.0), c(2.0, -1.0), c(0.5, 0.5)],
            diag: vec![c(0.0, 0.0), c(1.0, 1.0), c(-2.0, 0.0), c(1.0, 0.0)],
            sup: vec![c(3.0, 0.0), c(0.0, 1.0), c(1.0, 0.0)],
        };
        let x = vec![c(1.0, 0.0), c(-1.0, 2.0), c(0.5, 0.0), c(0.0, -3.0)];
        let b = t.matvec(&x);
        let y = t.solve(&b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).norm() < 1e-13);
        }
    }

    #[test]
    fn tridiagonal_singular() {
        let t = Tridiagonal {
            sub: vec![c(1.0, 0.0)],
            diag: vec![c(1.0, 0.0), c(1.0, 0.0)],
            sup: vec![c(1.0, 0.0)],
        };
        assert!(t.solve(&[c(1.0, 0.0), c(0.0, 0.0)]).is_none());
    }
}
