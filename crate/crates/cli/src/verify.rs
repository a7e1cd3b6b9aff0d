//! The `identities` verification suite: exact identities checked on a fixed
//! deterministic sample of parameters.

use crate::config::RunConfig;
use crate::Failure;
use gecmv::cocycle::{conjugation_defect, strip_radius};
use gecmv::lyapunov::jensen_integral;
use gecmv::model::{CoefficientSource, MosaicParams};
use gecmv::operators::{
    assemble_finite, conjugate, gauge_to_standard, recover_coefficients, rho_phases, BoundaryCondition, IndexWindow,
};
use gecmv::spectral::{char_poly, char_poly_evenness, dense_char_poly, hausdorff_circle, truncation_spectrum};
use gecmv::{Result, C64};
use serde_json::{json, Value};
use std::f64::consts::TAU;

struct Suite {
    name: &'static str,
    tolerance: f64,
    check: fn() -> Result<f64>,
}

const SUITES: [Suite; 5] = [
    Suite { name: "conjugation", tolerance: 1e-12, check: conjugation },
    Suite { name: "determinant", tolerance: 1e-9, check: determinant },
    Suite { name: "gauge", tolerance: 1e-9, check: gauge },
    Suite { name: "evenness", tolerance: 1e-9, check: evenness },
    Suite { name: "jensen", tolerance: 1e-6, check: jensen },
];

/// Quasi-random point `k` of a 3-dimensional Kronecker sequence.
fn kronecker(k: usize) -> [f64; 3] {
    const G: [f64; 3] = [0.819_172_513_396_164_4, 0.671_043_606_703_789_2, 0.549_700_477_901_970_4];
    G.map(|g| (0.5 + g * k as f64).fract())
}

fn sample_params(k: usize) -> MosaicParams {
    let [a, b, c] = kronecker(k);
    MosaicParams::golden(0.05 + 0.9 * a, 0.05 + 0.9 * b, c).expect("couplings are in range")
}

fn sample_unit(k: usize, j: usize) -> C64 {
    C64::from_polar(1.0, TAU * kronecker(7 * k + j + 1)[j % 3])
}

fn conjugation() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let p = sample_params(k);
        worst = worst.max(conjugation_defect(&p, sample_unit(k, 0), kronecker(k + 1000)[0], k as i64 % 17 - 8)?);
    }
    Ok(worst)
}

fn determinant() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..60 {
        let p = sample_params(k);
        let src = if k % 2 == 0 { CoefficientSource::mosaic(p) } else { CoefficientSource::twin(p)? };
        let w = IndexWindow::with_len(k as i64 % 9 - 4, 2 + k % 11)?;
        let left = if k % 5 == 0 { BoundaryCondition::Open } else { BoundaryCondition::Phase(sample_unit(k, 1)) };
        let right = BoundaryCondition::Phase(sample_unit(k, 2));
        let z = sample_unit(k, 0);
        let p = char_poly(&src, w, left, right, z)?;
        let rho: f64 = w.indices().map(|j| src.rho_at(j).norm()).product();
        let d = dense_char_poly(&src, w, left, right, z)? / rho;
        worst = worst.max((p.normalized - d).norm() / d.norm().max(1e-300));
    }
    Ok(worst)
}

fn gauge() -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..8 {
        let p = sample_params(k);
        let twin = CoefficientSource::twin(p)?;
        let w = IndexWindow::with_len(-31, 64)?;
        let (b1, b2) = (sample_unit(k, 1), sample_unit(k, 2));
        let op = assemble_finite(&twin, w, BoundaryCondition::Phase(b1), BoundaryCondition::Phase(b2))?;
        let fixed = conjugate(&op, &gauge_to_standard(&rho_phases(&twin), w)?);
        for (j, q) in recover_coefficients(&fixed)? {
            worst = worst.max((q.alpha - twin.alpha_at(j)).norm());
            worst = worst.max((q.rho - C64::new(twin.rho_at(j).norm(), 0.0)).norm());
        }
        let s1 = truncation_spectrum(&twin, w, b1, b2)?;
        let s2 = truncation_spectrum(&CoefficientSource::mosaic(p), w, b1, b2)?;
        worst = worst.max(hausdorff_circle(&s1.angles, &s2.angles));
    }
    Ok(worst)
}

fn evenness() -> Result<f64> {
    let grid: Vec<f64> = (0..32).map(|i| (i as f64 + 0.5) / 32.0).collect();
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let twin = CoefficientSource::twin(sample_params(k))?;
        for n in [2i64, 3, 4] {
            worst = worst.max(char_poly_evenness(&twin, n, sample_unit(k, 0), &grid, sample_unit(k, 1))?);
        }
    }
    Ok(worst)
}

/// Midpoint rule, exponentially accurate for the periodic integrand away
/// from the strip boundary `|ε| = ε0(t)`.
fn jensen() -> Result<f64> {
    const M: usize = 4096;
    let mut worst: f64 = 0.0;
    for t in [0.3, 0.6, 0.9] {
        let e0 = strip_radius(t);
        for eps in [0.0, e0 / 2.0, -e0 / 2.0, 2.0 * e0, -2.0 * e0] {
            let q: f64 = (0..M)
                .map(|i| {
                    let s = (C64::new((i as f64 + 0.5) / M as f64, eps) * TAU).sin() * t;
                    0.5 * (C64::new(1.0, 0.0) - s * s).norm().ln()
                })
                .sum::<f64>()
                / M as f64;
            worst = worst.max((q - jensen_integral(t, eps)).abs());
        }
    }
    Ok(worst)
}

pub fn run(cfg: &RunConfig) -> std::result::Result<Value, Failure> {
    debug_assert_eq!(cfg.suite, "identities");
    let mut results = Vec::new();
    let mut failed = Vec::new();
    for s in &SUITES {
        let defect = (s.check)()?;
        let pass = defect < s.tolerance;
        if !pass {
            failed.push(s.name);
        }
        results.push(json!({"suite": s.name, "defect": defect, "tolerance": s.tolerance, "pass": pass}));
    }
    let v = json!({"suite": cfg.suite, "results": results, "status": if failed.is_empty() { "ok" } else { "failed" }});
    if let Some(path) = &cfg.output {
        let text = serde_json::to_string_pretty(&v).map_err(|e| Failure::Validation(e.to_string()))?;
        std::fs::write(path, text + "\n")
            .map_err(|e| Failure::Validation(format!("cannot write {}: {e}", path.display())))?;
    }
    if failed.is_empty() {
        Ok(v)
    } else {
        Err(Failure::Numeric(format!("identity suites failed: {}", failed.join(", "))))
    }
}
