//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --release --test acceptance -- 4 7`.

use gecmv::analysis::{decay_rate_fit, eps_uniform_measure, mobility_edge_scan};
use gecmv::cocycle::{conjugation_defect, strip_radius, CocycleSpec, Family};
use gecmv::lyapunov::{acceleration, jensen_integral, le_closed_form, le_estimate, spectral_arcs, Region};
use gecmv::model::{CoefficientSource, MosaicParams, VerblunskyPair, GOLDEN};
use gecmv::operators::{
    assemble_finite, gauge_to_standard, rho_phases, sgecmv_gauge, walk_matrix, BoundaryCondition, IndexWindow,
    SuperPair, SuperSource,
};
use gecmv::spectral::{
    bulk_angles, char_poly, char_poly_evenness, eigenvector_shooting, hausdorff_circle, regularity_test,
    rho_product_rate, Regularity, BETAS,
};
use gecmv::C64;
use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};
use std::time::Instant;

type Check = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit(r: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(1.0, r.gen_range(0.0..TAU))
}

fn random_pair(r: &mut ChaCha8Rng) -> VerblunskyPair {
    let a = C64::from_polar(r.gen_range(0.0..0.95f64).sqrt(), r.gen_range(0.0..TAU));
    let rho = unit(r) * (1.0 - a.norm_sqr()).sqrt();
    VerblunskyPair::new(a, rho).unwrap()
}

fn random_params(r: &mut ChaCha8Rng) -> MosaicParams {
    MosaicParams::new(r.gen_range(0.1..0.99), r.gen_range(0.05..0.99), GOLDEN, r.gen_range(0.0..1.0), 2).unwrap()
}

fn dense_eigen_angles(m: DMatrix<C64>) -> Vec<f64> {
    let ev = nalgebra::Schur::new(m).eigenvalues().expect("complex Schur form");
    let mut a: Vec<f64> = ev.iter().map(|z| z.arg().rem_euclid(TAU)).collect();
    a.sort_by(|x, y| x.total_cmp(y));
    a
}

fn spread(cands: &[f64], k: usize) -> Vec<f64> {
    (0..k.min(cands.len())).map(|i| cands[i * cands.len() / k.min(cands.len())]).collect()
}

// 1. Transfer matrices against conjugated Szego products.
fn criterion_1() -> Check {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = random_params(&mut r);
        let z = unit(&mut r);
        let theta = r.gen_range(0.0..1.0);
        let n = r.gen_range(-40..40);
        worst = worst.max(conjugation_defect(&p, z, theta, n).map_err(|e| e.to_string())?);
        // Independent rebuild of both sides from the coefficients.
        let src = CoefficientSource::mosaic(p.with_theta(theta));
        let pr = |j: i64| {
            let q = src.pair_at(j);
            (q.alpha, q.rho.norm())
        };
        let ((a2, r2), (a1, r1), (a0, r0)) = (pr(2 * n), pr(2 * n - 1), pr(2 * n - 2));
        let a = Matrix2::new(
            z.inv() + a2 * a1.conj() + a1 * a0.conj() + a2 * a0.conj() * z,
            -a1 * r0 - a2 * r0 * z,
            -r2 * a1.conj() - r2 * a0.conj() * z,
            r2 * r0 * z,
        ) / C64::new(r2 * r1, 0.0);
        let t = z.arg().rem_euclid(TAU);
        let zis = C64::from_polar(1.0, -t / 2.0);
        let s = |al: C64, rh: f64| Matrix2::new(z, -al.conj(), -al * z, C64::new(1.0, 0.0)) * (zis / rh);
        let rm = |al: C64, rh: f64| Matrix2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), -al.conj(), C64::new(rh, 0.0));
        let j = Matrix2::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0));
        let rhs = rm(a2, r2).try_inverse().unwrap() * j * s(a2, r2) * s(a1, r1) * j * rm(a0, r0);
        worst = worst.max((a - rhs).iter().map(|x| x.norm()).fold(0.0, f64::max));
    }
    if worst < 1e-12 {
        Ok(format!("max defect {worst:.2e} over 1000 samples"))
    } else {
        Err(format!("max defect {worst:.2e}"))
    }
}

// 2. Szego-product polynomial against dense determinants, and equality of
//    determinants for complex and realified rho.
fn criterion_2() -> Check {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let len = r.gen_range(2..=12usize);
        let a = r.gen_range(-20..20i64);
        let w = IndexWindow::with_len(a, len).unwrap();
        let src = match case % 3 {
            0 => CoefficientSource::explicit(a - 1, (0..len + 2).map(|_| random_pair(&mut r)).collect()),
            1 => CoefficientSource::twin(random_params(&mut r)).unwrap(),
            _ => CoefficientSource::mosaic(random_params(&mut r)),
        };
        let bc = |r: &mut ChaCha8Rng| {
            if r.gen_bool(0.2) {
                BoundaryCondition::Open
            } else {
                BoundaryCondition::Phase(unit(r))
            }
        };
        let (left, right) = (bc(&mut r), bc(&mut r));
        let z = unit(&mut r);
        let p = char_poly(&src, w, left, right, z).map_err(|e| e.to_string())?;
        let rho: f64 = w.indices().map(|j| src.rho_at(j).norm()).product();
        let dense = |s: &CoefficientSource| {
            let op = assemble_finite(s, w, left, right).unwrap();
            (DMatrix::<C64>::identity(len, len) * z - op.to_dense()).determinant()
        };
        let d = dense(&src);
        let dr = dense(&src.realified());
        let scale = d.norm().max(1e-300);
        worst = worst.max((p.normalized - d / rho).norm() / (d / rho).norm().max(1e-300));
        worst = worst.max((d - dr).norm() / scale);
    }
    if worst < 1e-9 {
        Ok(format!("max relative error {worst:.2e} over 200 cases"))
    } else {
        Err(format!("max relative error {worst:.2e}"))
    }
}

// 3. Gauge isospectrality for plain and phase-twisted truncations.
fn criterion_3() -> Check {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let w = IndexWindow::new(-31, 32).unwrap();
    for _ in 0..20 {
        let base: Vec<VerblunskyPair> = (0..68).map(|_| random_pair(&mut r)).collect();
        let with_phases = |r: &mut ChaCha8Rng| {
            CoefficientSource::explicit(
                -33,
                base.iter().map(|p| VerblunskyPair::new_unchecked(p.alpha, unit(r) * p.rho.norm())).collect(),
            )
        };
        let (sx, sz) = (with_phases(&mut r), with_phases(&mut r));
        let (b1, b2) = (BoundaryCondition::Phase(unit(&mut r)), BoundaryCondition::Phase(unit(&mut r)));
        let ex = assemble_finite(&sx, w, b1, b2).unwrap();
        let ez = assemble_finite(&sz, w, b1, b2).unwrap();
        worst = worst.max(hausdorff_circle(&dense_eigen_angles(ex.to_dense()), &dense_eigen_angles(ez.to_dense())));
        // the gauge itself must be unitary and map one onto the standard form
        let g = gauge_to_standard(&rho_phases(&sx), w).map_err(|e| e.to_string())?;
        worst = worst.max(g.d.iter().map(|d| (d.norm() - 1.0).abs()).fold(0.0, f64::max));
    }
    let mut worst_super: f64 = 0.0;
    let w10 = IndexWindow::new(-4, 5).unwrap();
    for _ in 0..20 {
        let pairs: Vec<SuperPair> =
            (0..14).map(|_| SuperPair { pair: random_pair(&mut r), phi: r.gen_range(0.0..TAU) }).collect();
        let ss = SuperSource::new(-7, pairs).unwrap();
        let (b1, b2) = (BoundaryCondition::Phase(unit(&mut r)), BoundaryCondition::Phase(unit(&mut r)));
        let twisted = ss.assemble(w10, b1, b2).unwrap();
        let g = sgecmv_gauge(&ss, w10, unit(&mut r), unit(&mut r)).map_err(|e| e.to_string())?;
        let plain = assemble_finite(&g.source, w10, g.map_left(b1), g.map_right(b2)).unwrap();
        worst_super = worst_super
            .max(hausdorff_circle(&dense_eigen_angles(twisted.to_dense()), &dense_eigen_angles(plain.to_dense())));
    }
    if worst < 1e-9 && worst_super < 1e-9 {
        Ok(format!("N=64 max angle gap {worst:.2e}; twisted N=10 {worst_super:.2e}"))
    } else {
        Err(format!("N=64 max angle gap {worst:.2e}; twisted N=10 {worst_super:.2e}"))
    }
}

fn critical_params() -> MosaicParams {
    MosaicParams::golden(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0).unwrap()
}

/// Bulk eigenvalue angles of the `[0, n-1]` truncation split by the sign
/// of `|cos t| - cos t0` with a margin.
fn split_angles(p: &MosaicParams, n: usize, margin: f64) -> Result<(Vec<f64>, Vec<f64>), String> {
    let t0 = spectral_arcs(p.lambda1, p.lambda2).map_err(|e| e.to_string())?.t0;
    let w = IndexWindow::with_len(0, n).unwrap();
    let bulk = bulk_angles(&CoefficientSource::mosaic(*p), w, &BETAS, 4.0 * TAU / n as f64).map_err(|e| e.to_string())?;
    let sup = bulk.iter().cloned().filter(|t| t.cos().abs() > t0.cos() + margin).collect();
    let sub = bulk.iter().cloned().filter(|t| t.cos().abs() < t0.cos() - margin).collect();
    Ok((sup, sub))
}

// 4. Measured exponents at truncation eigenvalues against the closed form.
fn criterion_4() -> Check {
    let p = critical_params();
    let (sup, sub) = split_angles(&p, 512, 0.1)?;
    let (sup, sub) = (spread(&sup, 20), spread(&sub, 20));
    if sup.len() < 20 || sub.len() < 20 {
        return Err(format!("only {} / {} eligible angles", sup.len(), sub.len()));
    }
    let mut worst_sup: f64 = 0.0;
    let mut worst_sub: f64 = 0.0;
    for &t in &sup {
        let spec = CocycleSpec::at_angle(Family::SzegoPP, p, t, 0.0).unwrap();
        let l = le_estimate(&spec, 1_000_000, 8).map_err(|e| e.to_string())?.value;
        let half_f = le_closed_form(p.lambda1, p.lambda2, t).unwrap();
        worst_sup = worst_sup.max((l - half_f).abs());
    }
    for &t in &sub {
        let spec = CocycleSpec::at_angle(Family::SzegoPP, p, t, 0.0).unwrap();
        worst_sub = worst_sub.max(le_estimate(&spec, 1_000_000, 8).map_err(|e| e.to_string())?.value);
    }
    let msg = format!("supercritical max |L - F/2| = {worst_sup:.2e}; subcritical max L = {worst_sub:.2e}");
    if worst_sup < 5e-3 && worst_sub < 5e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 5. Quantized acceleration.
fn criterion_5() -> Check {
    let p = critical_params();
    let (sup, sub) = split_angles(&p, 512, 0.1)?;
    let (sup, sub) = (spread(&sup, 10), spread(&sub, 10));
    if sup.len() < 10 || sub.len() < 10 {
        return Err(format!("only {} / {} eligible angles", sup.len(), sub.len()));
    }
    let eps0 = strip_radius(p.lambda2);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &t in &sup {
        let spec = CocycleSpec::at_angle(Family::SzegoPP, p, t, 0.0).unwrap();
        let w = acceleration(&spec, eps0 / 4.0, 200_000, 8).map_err(|e| e.to_string())?;
        lo = lo.min(w);
        hi = hi.max(w);
    }
    let mut worst_sub: f64 = 0.0;
    for &t in &sub {
        let spec = CocycleSpec::at_angle(Family::SzegoPP, p, t, eps0 / 4.0).unwrap();
        let w = acceleration(&spec, eps0 / 8.0, 200_000, 8).map_err(|e| e.to_string())?;
        worst_sub = worst_sub.max(w.abs());
    }
    let msg = format!("supercritical omega in [{lo:.4}, {hi:.4}]; subcritical max |omega| = {worst_sub:.2e}");
    if lo >= 0.95 && hi <= 1.05 && worst_sub <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Tanh-sinh quadrature; endpoint singularities of logarithmic type are
/// integrated to near machine precision.
fn tanh_sinh(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let step = 1.0 / 64.0;
    let mut sum = 0.0;
    for k in -256i32..=256 {
        let u = k as f64 * step;
        let s = 0.5 * PI * u.sinh();
        // distance to the nearer endpoint, without cancellation
        let gap = 1.0 / (s.abs().exp() * s.cosh());
        if gap * h < 1e-300 {
            continue;
        }
        let w = 0.5 * PI * u.cosh() / (s.cosh() * s.cosh());
        let x = if s >= 0.0 { b - h * gap } else { a + h * gap };
        let v = f(x);
        // beyond double precision the node collapses onto the endpoint
        if v.is_finite() {
            sum += w * v;
        }
    }
    sum * h * step
}

// 6. Jensen closed form against quadrature.
fn criterion_6() -> Check {
    let mut worst: f64 = 0.0;
    for t in [0.3, 0.6, 0.9, 1.0] {
        let e0 = strip_radius(t);
        for eps in [0.0, e0 / 2.0, -e0 / 2.0, 2.0 * e0, -2.0 * e0] {
            let f = move |th: f64| {
                let s = (C64::new(th, eps) * TAU).sin() * t;
                0.5 * (C64::new(1.0, 0.0) - s * s).norm().ln()
            };
            let q: f64 = [0.0, 0.25, 0.5, 0.75, 1.0].windows(2).map(|w| tanh_sinh(&f, w[0], w[1])).sum();
            worst = worst.max((q - jensen_integral(t, eps)).abs());
        }
    }
    if worst < 1e-6 {
        Ok(format!("max deviation {worst:.2e} on the 4x5 grid"))
    } else {
        Err(format!("max deviation {worst:.2e}"))
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// 7. Fractal dimensions separate the two arc types.
fn criterion_7() -> Check {
    let p = MosaicParams::golden(0.7, 0.7, 0.0).unwrap();
    let scan = mobility_edge_scan(&p, 2048, 1, 1).map_err(|e| e.to_string())?;
    if scan.rows.len() != 2048 {
        return Err(format!("{} rows", scan.rows.len()));
    }
    let mut pp: Vec<f64> = scan.rows.iter().filter(|r| r.region == Region::PP).map(|r| r.gamma).collect();
    let mut ac: Vec<f64> = scan.rows.iter().filter(|r| r.region == Region::AC).map(|r| r.gamma).collect();
    if pp.is_empty() || ac.is_empty() {
        return Err(format!("{} PP rows, {} AC rows", pp.len(), ac.len()));
    }
    let (mp, ma) = (median(&mut pp), median(&mut ac));
    let below = pp.iter().filter(|&&g| g < ma).count() as f64 / pp.len() as f64;
    let msg = format!(
        "median Gamma PP {mp:.3} ({} rows), AC {ma:.3} ({} rows); {:.1}% of PP below AC median",
        pp.len(),
        ac.len(),
        100.0 * below
    );
    if ma - mp >= 0.3 && below >= 0.9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 8. Eigenvector decay against the cocycle growth rate.
fn criterion_8() -> Check {
    let p = critical_params();
    let n = 1024;
    let (sup, _) = split_angles(&p, n, 0.1)?;
    let w = IndexWindow::with_len(0, n).unwrap();
    let src = CoefficientSource::mosaic(p);
    let bc = BoundaryCondition::Phase(C64::new(1.0, 0.0));
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for &t in spread(&sup, sup.len()).iter() {
        if checked == 10 {
            break;
        }
        let prof = eigenvector_shooting(&src, w, t, bc, bc).map_err(|e| e.to_string())?;
        let peak_cell = prof.peak() / 2;
        if peak_cell < 160 || peak_cell > n / 2 - 160 {
            continue;
        }
        let fit = match decay_rate_fit(&prof, 160) {
            Ok(f) => f,
            Err(_) => continue,
        };
        let spec = CocycleSpec::at_angle(Family::SzegoPP, p, t, 0.0).unwrap();
        let l = le_estimate(&spec, 200_000, 8).map_err(|e| e.to_string())?.value;
        for rate in [fit.rate_left(), fit.rate_right()] {
            worst = worst.max((rate - l).abs() / l);
        }
        details.push(format!("{:.3}/{:.3}/{:.3}", fit.rate_left(), fit.rate_right(), l));
        checked += 1;
    }
    let msg = format!("{checked} eigenvectors, max relative deviation {worst:.3} (left/right/cocycle: {})", details.join(" "));
    if checked == 10 && worst < 0.15 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

// 9. Evenness of the twin determinant.
fn criterion_9() -> Check {
    let mut r = rng(9);
    let mut worst: f64 = 0.0;
    let grid: Vec<f64> = (0..32).map(|i| (i as f64 + 0.5) / 32.0).collect();
    for _ in 0..10 {
        let p = random_params(&mut r);
        let twin = CoefficientSource::twin(p).unwrap();
        let z = unit(&mut r);
        let b1 = unit(&mut r);
        for k in [2i64, 3, 4] {
            worst = worst.max(char_poly_evenness(&twin, k, z, &grid, b1).map_err(|e| e.to_string())?);
            // dense oracle
            let w = IndexWindow::new(1, 4 * k - 2).unwrap();
            let (l, rt) = (BoundaryCondition::Phase(b1), BoundaryCondition::Phase(b1.conj()));
            let base = 0.25 - k as f64 * p.phi;
            let det = |th: f64| {
                let op = assemble_finite(&twin.with_theta(base + th), w, l, rt).unwrap();
                (DMatrix::<C64>::identity(w.len(), w.len()) * z - op.to_dense()).determinant()
            };
            for &th in grid.iter().step_by(4) {
                worst = worst.max((det(th) - det(-th)).norm());
            }
        }
    }
    if worst < 1e-9 {
        Ok(format!("max evenness defect {worst:.2e}"))
    } else {
        Err(format!("max evenness defect {worst:.2e}"))
    }
}

// 10. Average of log|rho| against the Jensen value.
fn criterion_10() -> Check {
    let mut worst: f64 = 0.0;
    for (l1, l2) in [(0.7, 0.7), (0.5, 0.9), (0.9, 0.3), (0.3, 0.5), (FRAC_1_SQRT_2, 0.95)] {
        let src = CoefficientSource::mosaic(MosaicParams::golden(l1, l2, 0.123).unwrap());
        let rate = rho_product_rate(&src, 100_000).map_err(|e| e.to_string())?;
        let l2p = (1.0f64 - l2 * l2).sqrt();
        let gt = (l1 * l1 * (1.0 + l2p) / 2.0).ln();
        worst = worst.max((rate - gt / 4.0).abs());
    }
    if worst < 1e-3 {
        Ok(format!("max deviation {worst:.2e}"))
    } else {
        Err(format!("max deviation {worst:.2e}"))
    }
}

// 11. Walk operator against the CMV truncation away from the edges.
fn criterion_11() -> Check {
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = random_params(&mut r);
        let a = 2 * r.gen_range(-10..10i64) + 1;
        let w = IndexWindow::new(a, a + 2 * r.gen_range(4..12i64) + 1).unwrap();
        let walk = walk_matrix(&p, w).map_err(|e| e.to_string())?;
        let op = assemble_finite(&CoefficientSource::mosaic(p), w, BoundaryCondition::Open, BoundaryCondition::Open)
            .unwrap();
        for m in w.a + 2..=w.b - 2 {
            for n in w.indices() {
                worst = worst.max((walk.entry(m, n) - op.entry(m, n)).norm());
            }
        }
    }
    if worst < 1e-14 {
        Ok(format!("max interior difference {worst:.2e}"))
    } else {
        Err(format!("max interior difference {worst:.2e}"))
    }
}

// 12. Regularity smoke suite and the uniformity measure.
fn criterion_12() -> Check {
    let p = critical_params();
    let src = CoefficientSource::mosaic(p);
    let bc = BoundaryCondition::Phase(C64::new(1.0, 0.0));
    let (sup, sub) = split_angles(&p, 512, 0.1)?;
    let mut regular = 0;
    let mut singular = 0;
    let mut r = rng(12);
    for &t in &spread(&sup, 10) {
        let y = r.gen_range(-5000..5000i64);
        let l = le_closed_form(p.lambda1, p.lambda2, t).unwrap();
        let z = C64::from_polar(1.0, t);
        if let Regularity::Regular { .. } =
            regularity_test(&src, z, y, 0.9 * l / 2.0, 400, bc, bc).map_err(|e| e.to_string())?
        {
            regular += 1;
        }
    }
    for &t in &spread(&sub, 10) {
        let y = r.gen_range(-5000..5000i64);
        let z = C64::from_polar(1.0, t);
        if regularity_test(&src, z, y, 0.1, 400, bc, bc).map_err(|e| e.to_string())? == Regularity::Singular {
            singular += 1;
        }
    }
    let k = 32;
    let cheb: Vec<f64> = (0..=k).map(|j| j as f64 / (2 * k) as f64).collect();
    let eps = eps_uniform_measure(&cheb).map_err(|e| e.to_string())?;
    let msg = format!("{regular}/10 supercritical regular, {singular}/10 subcritical singular, Chebyshev eps {eps:.3}");
    if regular == 10 && singular == 10 && eps < 0.5 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 12] = [
        (1, "cocycle conjugation identity", criterion_1),
        (2, "characteristic polynomial formula", criterion_2),
        (3, "gauge isospectrality", criterion_3),
        (4, "closed-form Lyapunov exponent", criterion_4),
        (5, "acceleration quantization", criterion_5),
        (6, "Jensen formula", criterion_6),
        (7, "mobility-edge separation", criterion_7),
        (8, "eigenfunction decay", criterion_8),
        (9, "determinant evenness", criterion_9),
        (10, "scalar rate law", criterion_10),
        (11, "walk identification", criterion_11),
        (12, "localization smoke suite", criterion_12),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let res = f();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(msg) => println!("PASS [{id:>2}] {name}: {msg} ({secs:.1}s)"),
            Err(msg) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {msg} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
