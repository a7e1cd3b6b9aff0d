//! Transfer and Szego cocycles of the `s = 2` mosaic model, evaluated at
//! complexified phases, plus overflow-safe orbit products.

use crate::error::{CmvError, Result};
pub use crate::linalg::Mat2;
use crate::model::{frac, CoefficientSource, MosaicParams, VerblunskyPair};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// `|rho|` below this is treated as zero in denominators.
pub const RHO_TOL: f64 = 1e-14;

const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// The quasi-periodic step `A_{λ1,λ2,z}`; orbits alternate it with the
    /// constant step `A_{λ1,0,z}`.
    TransferA,
    /// `A^+ = A_{λ1,0,z} A_{λ1,λ2,z}` over the rotation `2Φ`.
    TransferAPlus,
    /// Normalized Szego map at the quasi-periodic site; orbits run over
    /// single lattice sites.
    Szego,
    /// Four consecutive Szego maps, over the rotation `2Φ`.
    SzegoPP,
    /// The unnormalized four-step map `M_z`.
    Mz,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::TransferA, Family::TransferAPlus, Family::Szego, Family::SzegoPP, Family::Mz];

    /// Whether evaluation off the real axis is limited to the strip
    /// `|ε| < ε0(λ2)`.
    pub fn needs_strip(&self) -> bool {
        !matches!(self, Family::Mz)
    }
}

impl std::str::FromStr for Family {
    type Err = CmvError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "transfera" | "a" => Family::TransferA,
            "transferaplus" | "aplus" | "a+" => Family::TransferAPlus,
            "szego" | "s" => Family::Szego,
            "szegopp" | "s++" | "spp" => Family::SzegoPP,
            "mz" | "m" => Family::Mz,
            other => return Err(CmvError::InvalidParameter(format!("unknown cocycle family '{other}'"))),
        })
    }
}

/// `(1 / 2 pi) asinh(λ2' / λ2)`, infinite for `λ2 = 0`.
pub fn strip_radius(lambda2: f64) -> f64 {
    if lambda2 <= 0.0 {
        return f64::INFINITY;
    }
    let l2p = (1.0 - lambda2 * lambda2).max(0.0).sqrt();
    (l2p / lambda2).asinh() / (2.0 * PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleSpec {
    pub family: Family,
    pub params: MosaicParams,
    pub z: C64,
    pub epsilon: f64,
    /// Build `A` from `|rho|` instead of the complex `rho`.
    pub realified: bool,
}

impl CocycleSpec {
    pub fn new(family: Family, params: MosaicParams, z: C64, epsilon: f64) -> Result<Self> {
        let modulus = z.norm();
        if !((modulus - 1.0).abs() <= 1e-12) {
            return Err(CmvError::NotOnUnitCircle { modulus });
        }
        if params.s != 2 {
            return Err(CmvError::InvalidParameter(format!(
                "cocycles are implemented for the s = 2 model, got s = {}",
                params.s
            )));
        }
        if !(params.lambda1 > 0.0) {
            return Err(CmvError::DegenerateCoupling("lambda1 = 0 makes every even rho vanish".into()));
        }
        if !epsilon.is_finite() {
            return Err(CmvError::InvalidParameter("epsilon must be finite".into()));
        }
        let radius = strip_radius(params.lambda2);
        if family.needs_strip() && epsilon != 0.0 && epsilon.abs() >= radius {
            return Err(CmvError::StripExceeded { epsilon, radius });
        }
        Ok(CocycleSpec { family, params, z, epsilon, realified: false })
    }

    /// Spectral parameter `z = e^{it}`.
    pub fn at_angle(family: Family, params: MosaicParams, t: f64, epsilon: f64) -> Result<Self> {
        CocycleSpec::new(family, params, C64::from_polar(1.0, t), epsilon)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut s = CocycleSpec::new(self.family, self.params, self.z, epsilon)?;
        s.realified = self.realified;
        Ok(s)
    }

    pub fn with_family(&self, family: Family) -> Result<Self> {
        let mut s = CocycleSpec::new(family, self.params, self.z, self.epsilon)?;
        s.realified = self.realified;
        Ok(s)
    }

    pub fn realified(mut self) -> Self {
        self.realified = true;
        self
    }

    /// Rotation per step of an orbit (`Φ` for the single-site Szego family,
    /// whose phase advances by `2Φ` every four sites).
    pub fn base_rotation(&self) -> f64 {
        2.0 * self.params.phi
    }
}

/// `z^{-1/2} = e^{-it/2}` with `t = arg z` taken in `[0, 2 pi)`; the other
/// branch is its negative.
pub fn z_inv_sqrt(z: C64, other_branch: bool) -> C64 {
    let mut t = z.arg();
    if t < 0.0 {
        t += 2.0 * PI;
    }
    let r = C64::from_polar(1.0 / z.norm().sqrt(), -t / 2.0);
    if other_branch {
        -r
    } else {
        r
    }
}

/// A site with the analytic continuations of `alpha`, `conj alpha`,
/// `rho`, `conj rho` and `|rho|` as separate values.
#[derive(Clone, Copy, Debug)]
struct Site {
    a: C64,
    ab: C64,
    r: C64,
    rb: C64,
    mod_r: C64,
}

impl Site {
    fn from_pair(p: VerblunskyPair) -> Site {
        Site { a: p.alpha, ab: p.alpha.conj(), r: p.rho, rb: p.rho.conj(), mod_r: C64::new(p.rho.norm(), 0.0) }
    }

    fn realified(self) -> Site {
        Site { r: self.mod_r, rb: self.mod_r, ..self }
    }

    /// Quasi-periodic pair at complex phase `x`.
    fn quasi(lambda2: f64, lambda2p: f64, x: C64) -> Site {
        let arg = x * (2.0 * PI);
        let (s, c) = (arg.sin(), arg.cos());
        let a = s * lambda2;
        Site {
            a,
            ab: a,
            r: c * lambda2 - I * lambda2p,
            rb: c * lambda2 + I * lambda2p,
            mod_r: (ONE - a * a).sqrt(),
        }
    }

    fn even(p: &MosaicParams) -> Site {
        Site::from_pair(VerblunskyPair::new_unchecked(C64::new(p.lambda1p(), 0.0), C64::new(p.lambda1, 0.0)))
    }

    fn inert() -> Site {
        Site::from_pair(VerblunskyPair::new_unchecked(C64::new(0.0, 0.0), -I))
    }
}

fn nonzero(x: C64, index: i64) -> Result<C64> {
    if !(x.norm() >= RHO_TOL) {
        return Err(CmvError::SingularRho { index, modulus: x.norm() });
    }
    Ok(x)
}

/// Transfer matrix mapping `(u_{2n-1}, u_{2n-2})` to `(u_{2n+1}, u_{2n})`
/// from the sites `2n`, `2n - 1`, `2n - 2`.
fn transfer_from_sites(s2: Site, s1: Site, s0: Site, z: C64, n: i64) -> Result<Mat2> {
    let den = nonzero(s2.r, 2 * n)? * nonzero(s1.r, 2 * n - 1)?;
    let m = Mat2::new(
        z.inv() + s2.a * s1.ab + s1.a * s0.ab + s2.a * s0.ab * z,
        -s0.rb * s1.a - s0.rb * s2.a * z,
        -s2.r * s1.ab - s2.r * s0.ab * z,
        s2.r * s0.rb * z,
    );
    Ok(m.scale(den.inv()))
}

fn szego_from_site(s: Site, z: C64, zis: C64, index: i64) -> Result<Mat2> {
    let r = nonzero(s.mod_r, index)?;
    Ok(Mat2::new(z, -s.ab, -s.a * z, ONE).scale(zis / r))
}

/// `A_{n,z}` of an arbitrary source (complex `rho` in the denominator).
pub fn transfer_matrix(source: &CoefficientSource, n: i64, z: C64) -> Result<Mat2> {
    let s = |j: i64| Site::from_pair(source.pair_at(j));
    transfer_from_sites(s(2 * n), s(2 * n - 1), s(2 * n - 2), z, n)
}

/// Normalized Szego map `z^{-1/2} / |rho| [[z, -conj α], [-α z, 1]]`.
pub fn szego_map(pair: VerblunskyPair, z: C64) -> Result<Mat2> {
    szego_from_site(Site::from_pair(pair), z, z_inv_sqrt(z, false), 0)
}

/// Like [`szego_map`], for the chosen branch of `z^{-1/2}`.
pub fn szego_map_branch(pair: VerblunskyPair, z: C64, other_branch: bool) -> Result<Mat2> {
    szego_from_site(Site::from_pair(pair), z, z_inv_sqrt(z, other_branch), 0)
}

/// `S_{n,z}` of a source at lattice index `n`.
pub fn szego_at(source: &CoefficientSource, n: i64, z: C64) -> Result<Mat2> {
    szego_from_site(Site::from_pair(source.pair_at(n)), z, z_inv_sqrt(z, false), n)
}

/// `w(x) = sqrt(1 - λ2^2 sin^2 2πx)` at a complex phase (principal root).
pub fn w_factor(lambda2: f64, x: C64) -> C64 {
    let s = (x * (2.0 * PI)).sin() * lambda2;
    (ONE - s * s).sqrt()
}

/// The closed-form four-step matrix `M_z(x)`.
pub fn mz_matrix(params: &MosaicParams, z: C64, x: C64) -> Mat2 {
    let l1p = params.lambda1p();
    let l1p2 = l1p * l1p;
    let s = (x * (2.0 * PI)).sin() * params.lambda2;
    let zi = z.inv();
    let z2 = z * z;
    let zi2 = zi * zi;
    let diag_s = s * l1p * (z + zi);
    Mat2::new(
        z2 + l1p2 + diag_s,
        -(ONE + zi2) * l1p - s * (z + zi * l1p2),
        -(ONE + z2) * l1p - s * (zi + z * l1p2),
        zi2 + l1p2 + diag_s,
    )
}

fn phase(theta: f64, eps: f64) -> C64 {
    C64::new(frac(theta), eps)
}

/// Evaluates the family's map at phase `theta + i ε`.
pub fn eval_map(spec: &CocycleSpec, theta: f64) -> Result<Mat2> {
    let p = &spec.params;
    let x = phase(theta, spec.epsilon);
    let z = spec.z;
    let quasi = Site::quasi(p.lambda2, p.lambda2p(), x);
    let even = Site::even(p);
    let fix = |s: Site| if spec.realified { s.realified() } else { s };
    match spec.family {
        Family::TransferA => transfer_from_sites(fix(even), fix(quasi), fix(even), z, 0),
        Family::TransferAPlus => {
            let a0 = transfer_from_sites(fix(even), fix(quasi), fix(even), z, 0)?;
            let a1 = transfer_from_sites(fix(even), fix(Site::inert()), fix(even), z, 1)?;
            Ok(a1 * a0)
        }
        Family::Szego => szego_from_site(quasi, z, z_inv_sqrt(z, false), -1),
        Family::SzegoPP => szego_pp(p, z, x),
        Family::Mz => Ok(mz_matrix(p, z, x)),
    }
}

/// `S_{4n+2} S_{4n+1} S_{4n} S_{4n-1}` at the phase of site `4n - 1`.
fn szego_pp(p: &MosaicParams, z: C64, x: C64) -> Result<Mat2> {
    let zis = z_inv_sqrt(z, false);
    let even = Site::even(p);
    let s0 = szego_from_site(Site::quasi(p.lambda2, p.lambda2p(), x), z, zis, -1)?;
    let s1 = szego_from_site(even, z, zis, 0)?;
    let s2 = szego_from_site(Site::inert(), z, zis, 1)?;
    let s3 = szego_from_site(even, z, zis, 2)?;
    Ok(s3 * s2 * s1 * s0)
}

/// The constant step `A_{λ1,0,z}` of the transfer family.
fn transfer_inert(spec: &CocycleSpec) -> Result<Mat2> {
    let even = Site::even(&spec.params);
    let (e, q) = if spec.realified { (even.realified(), Site::inert().realified()) } else { (even, Site::inert()) };
    transfer_from_sites(e, q, e, spec.z, 1)
}

/// `max |A_{n,z} - R_{2n}^{-1} J S_{2n} S_{2n-1} J R_{2n-2}|` for the
/// mosaic source at phase `theta`, with `A` built from `|rho|` and
/// `R_n = [[1, 0], [-conj α_n, |ρ_n|]]`.
pub fn conjugation_defect(params: &MosaicParams, z: C64, theta: f64, n: i64) -> Result<f64> {
    let src = CoefficientSource::mosaic(params.with_theta(theta));
    let real = src.realified();
    let a = transfer_matrix(&real, n, z)?;
    let r = |j: i64| -> Result<Mat2> {
        let p = src.pair_at(j);
        let m = nonzero(C64::new(p.rho.norm(), 0.0), j)?;
        Ok(Mat2::new(ONE, C64::new(0.0, 0.0), -p.alpha.conj(), m))
    };
    let r_inv = r(2 * n)?.inverse().ok_or(CmvError::SingularRho { index: 2 * n, modulus: 0.0 })?;
    let j = Mat2::swap();
    let rhs = r_inv * j * szego_at(&src, 2 * n, z)? * szego_at(&src, 2 * n - 1, z)? * j * r(2 * n - 2)?;
    Ok(a.max_abs_diff(&rhs))
}

/// Running product with its norm factored out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitProduct {
    /// `log` of the norm of the full product.
    pub log_norm: f64,
    /// Product divided by its norm.
    pub frame: Mat2,
    pub steps: usize,
}

impl OrbitProduct {
    pub fn new() -> Self {
        OrbitProduct { log_norm: 0.0, frame: Mat2::identity(), steps: 0 }
    }

    /// Left-multiplies by `m` and renormalizes.
    pub fn push(&mut self, m: &Mat2) {
        let f = *m * self.frame;
        let n = f.norm();
        self.log_norm += n.ln();
        self.frame = f.scale_re(1.0 / n);
        self.steps += 1;
    }

    pub fn rate(&self) -> f64 {
        self.log_norm / self.steps as f64
    }
}

impl Default for OrbitProduct {
    fn default() -> Self {
        OrbitProduct::new()
    }
}

/// `log ||M(θ_{n-1}) ... M(θ_0)||` along the orbit of `theta0`.
///
/// Phases advance by `2Φ` per step for `TransferAPlus`, `SzegoPP` and
/// `Mz`. `TransferA` alternates the quasi-periodic step at
/// `θ0 + 2⌊j/2⌋Φ` with the constant step. `Szego` runs over lattice sites
/// `-1, 0, 1, 2, 3, ...`, so four steps make one `SzegoPP` step.
pub fn orbit_log_norm(spec: &CocycleSpec, theta0: f64, n_steps: usize) -> Result<OrbitProduct> {
    if n_steps == 0 {
        return Err(CmvError::InvalidParameter("n_steps must be at least 1".into()));
    }
    let p = &spec.params;
    let rot = spec.base_rotation();
    let at = |k: usize| theta0 + frac(k as f64 * rot);
    let mut orbit = OrbitProduct::new();
    match spec.family {
        Family::TransferA => {
            let inert = transfer_inert(spec)?;
            for j in 0..n_steps {
                if j % 2 == 0 {
                    orbit.push(&eval_map(spec, at(j / 2))?);
                } else {
                    orbit.push(&inert);
                }
            }
        }
        Family::Szego => {
            let zis = z_inv_sqrt(spec.z, false);
            let even = szego_from_site(Site::even(p), spec.z, zis, 0)?;
            let inert = szego_from_site(Site::inert(), spec.z, zis, 1)?;
            for j in 0..n_steps {
                match j % 4 {
                    0 => orbit.push(&eval_map(spec, at(j / 4))?),
                    2 => orbit.push(&inert),
                    _ => orbit.push(&even),
                }
            }
        }
        Family::Mz if spec.epsilon == 0.0 => {
            // real phases: skip the complex trigonometry
            for k in 0..n_steps {
                orbit.push(&mz_matrix(p, spec.z, C64::new(frac(at(k)), 0.0)));
            }
        }
        _ => {
            for k in 0..n_steps {
                orbit.push(&eval_map(spec, at(k))?);
            }
        }
    }
    Ok(orbit)
}
