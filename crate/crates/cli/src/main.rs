//! `gecmv` command-line front end.

mod config;
mod verify;

use clap::{Parser, Subcommand};
use config::{Flags, RunConfig};
use gecmv::analysis::{mobility_edge_scan_with, ScanSource};
use gecmv::cocycle::{CocycleSpec, Family};
use gecmv::lyapunov::{classify, le_closed_form, le_estimate, spectral_arcs, ClassifyOptions};
use gecmv::model::{mobility_edge_t0, CoefficientSource};
use gecmv::operators::{
    assemble_finite, conjugate, gauge_to_standard, recover_coefficients, rho_phases, BoundaryCondition, IndexWindow,
};
use gecmv::spectral::{hausdorff_circle, truncation_spectrum, write_spectrum_csv};
use gecmv::{CmvError, C64};
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "gecmv", version, about = "Spectra, cocycles and mobility edges of the mosaic unitary almost-Mathieu walk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Eigenvalue angles of a finite truncation (CSV).
    Spectrum,
    /// Phase-averaged Lyapunov exponent at one spectral angle.
    Lyapunov,
    /// Sub/supercritical classification at one spectral angle.
    Classify,
    /// Mobility edge t0 and the spectral arcs.
    Arcs,
    /// Fractal dimension and decay of every eigenvector of a truncation (CSV).
    MobilityScan,
    /// t0 and arc endpoints over a (lambda1, lambda2) grid (CSV).
    PhaseDiagram,
    /// Gauge-fixes the complex-rho twin and compares it with the mosaic walk.
    GaugeCheck,
    /// Runs a built-in verification suite.
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Lyapunov => "lyapunov",
            Command::Classify => "classify",
            Command::Arcs => "arcs",
            Command::MobilityScan => "mobility-scan",
            Command::PhaseDiagram => "phase-diagram",
            Command::GaugeCheck => "gauge-check",
            Command::Verify => "verify",
        }
    }

    fn default_output(&self) -> Option<&'static str> {
        match self {
            Command::Spectrum => Some("spectrum.csv"),
            Command::MobilityScan => Some("mobility_scan.csv"),
            Command::PhaseDiagram => Some("phase_diagram.csv"),
            _ => None,
        }
    }
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<CmvError> for Failure {
    fn from(e: CmvError) -> Self {
        if e.is_numeric() {
            Failure::Numeric(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Validation(format!("cannot write {}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = RunConfig::resolve(cli.command, &cli.flags).and_then(|cfg| {
        install_pool(cfg.threads)?;
        run(cli.command, &cfg)
    });
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            println!("{}", json!({"command": cli.command.name(), "status": "error", "message": f.message()}));
            ExitCode::from(f.code())
        }
    }
}

fn install_pool(threads: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Validation(format!("cannot start {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn run(cmd: Command, cfg: &RunConfig) -> Result<Value, Failure> {
    let mut summary = match cmd {
        Command::Spectrum => spectrum(cfg)?,
        Command::Lyapunov => lyapunov(cfg)?,
        Command::Classify => classify_cmd(cfg)?,
        Command::Arcs => arcs(cfg)?,
        Command::MobilityScan => mobility_scan(cfg)?,
        Command::PhaseDiagram => phase_diagram(cfg)?,
        Command::GaugeCheck => gauge_check(cfg)?,
        Command::Verify => verify::run(cfg)?,
    };
    let obj = summary.as_object_mut().expect("summaries are objects");
    obj.insert("command".into(), json!(cmd.name()));
    obj.entry("status").or_insert(json!("ok"));
    obj.insert("seed".into(), json!(cfg.seed));
    if let Some(p) = output_path(cmd, cfg) {
        obj.insert("output".into(), json!(p.display().to_string()));
    }
    Ok(summary)
}

fn output_path(cmd: Command, cfg: &RunConfig) -> Option<PathBuf> {
    cfg.output.clone().or_else(|| cmd.default_output().map(PathBuf::from))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_json(path: &Path, v: &Value) -> Result<(), Failure> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| Failure::Validation(e.to_string()))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| io_failure(path, e))
}

fn source_for(cfg: &RunConfig) -> Result<CoefficientSource, Failure> {
    let p = cfg.params()?;
    Ok(match cfg.source.as_str() {
        "mosaic" => CoefficientSource::mosaic(p),
        "uamo" => CoefficientSource::uamo(p),
        "twin" => CoefficientSource::twin(p)?,
        other => return Err(Failure::Validation(format!("unknown source {other:?}"))),
    })
}

fn spectrum(cfg: &RunConfig) -> Result<Value, Failure> {
    let src = source_for(cfg)?;
    let window = IndexWindow::with_len(cfg.start, cfg.n)?;
    let (b1, b2) = (C64::from_polar(1.0, cfg.beta1), C64::from_polar(1.0, cfg.beta2));
    let s = truncation_spectrum(&src, window, b1, b2)?;
    let path = output_path(Command::Spectrum, cfg).unwrap();
    let mut out = create(&path)?;
    write_spectrum_csv(&mut out, &[(s.clone(), cfg.theta)]).and_then(|_| out.flush()).map_err(|e| io_failure(&path, e))?;
    Ok(json!({"count": s.count, "max_residual": s.residual, "window": [window.a, window.b]}))
}

fn family(name: &str) -> Result<Family, Failure> {
    Ok(match name {
        "transfer-a" => Family::TransferA,
        "transfer-a-plus" => Family::TransferAPlus,
        "szego" => Family::Szego,
        "szego-pp" => Family::SzegoPP,
        "mz" => Family::Mz,
        other => {
            return Err(Failure::Validation(format!(
                "unknown family {other:?} (expected transfer-a, transfer-a-plus, szego, szego-pp or mz)"
            )))
        }
    })
}

fn lyapunov(cfg: &RunConfig) -> Result<Value, Failure> {
    let p = cfg.params()?;
    let t = cfg.require_t()?;
    let spec = CocycleSpec::at_angle(family(&cfg.family)?, p, t, cfg.epsilon)?;
    let est = le_estimate(&spec, cfg.steps, cfg.phases)?;
    let closed = if cfg.epsilon == 0.0 { le_closed_form(p.lambda1, p.lambda2, t).ok() } else { None };
    let v = json!({
        "t": t,
        "epsilon": cfg.epsilon,
        "family": cfg.family,
        "value": est.value,
        "raw_rate": est.raw_cocycle_rate,
        "phase_spread": est.spread,
        "steps": est.n_steps,
        "phases": est.n_phases,
        "closed_form": closed,
    });
    if let Some(path) = &cfg.output {
        write_json(path, &v)?;
    }
    Ok(v)
}

fn classify_cmd(cfg: &RunConfig) -> Result<Value, Failure> {
    let p = cfg.params()?;
    let t = cfg.require_t()?;
    let mut opts = ClassifyOptions { n_steps: cfg.steps, n_phases: cfg.phases, ..ClassifyOptions::default() };
    if let Some(x) = cfg.super_threshold {
        opts.super_threshold = x;
    }
    if let Some(x) = cfg.sub_threshold {
        opts.sub_threshold = x;
    }
    let c = classify(&p, t, &opts)?;
    let v = json!({"t": t, "tag": format!("{:?}", c.tag), "evidence": c.evidence});
    if let Some(path) = &cfg.output {
        write_json(path, &v)?;
    }
    Ok(v)
}

fn arcs(cfg: &RunConfig) -> Result<Value, Failure> {
    let a = spectral_arcs(cfg.lambda1, cfg.lambda2)?;
    let arc = |x: &gecmv::lyapunov::Arc| json!([x.lo(), x.hi()]);
    let v = json!({
        "lambda1": cfg.lambda1,
        "lambda2": cfg.lambda2,
        "t0": a.t0,
        "edges": a.edges(),
        "ac_arcs": [arc(&a.ac[0]), arc(&a.ac[1])],
        "pp_arcs": [arc(&a.pp[0]), arc(&a.pp[1])],
    });
    if let Some(path) = &cfg.output {
        write_json(path, &v)?;
    }
    Ok(v)
}

fn mobility_scan(cfg: &RunConfig) -> Result<Value, Failure> {
    let p = cfg.params()?;
    let kind = match cfg.source.as_str() {
        "mosaic" => ScanSource::Mosaic,
        "twin" => ScanSource::Twin,
        other => return Err(Failure::Validation(format!("mobility-scan supports mosaic or twin, not {other:?}"))),
    };
    let scan = mobility_edge_scan_with(&p, cfg.n, cfg.theta_samples, cfg.beta_samples, kind)?;
    let path = output_path(Command::MobilityScan, cfg).unwrap();
    let mut out = create(&path)?;
    scan.write_csv(&mut out).and_then(|_| out.flush()).map_err(|e| io_failure(&path, e))?;
    let means: serde_json::Map<String, Value> = scan
        .region_means()
        .into_iter()
        .map(|(r, m, c)| (r.to_string(), json!({"mean_gamma": if m.is_finite() { json!(m) } else { Value::Null }, "rows": c})))
        .collect();
    Ok(json!({"rows": scan.rows.len(), "t0": scan.t0, "regions": means}))
}

fn phase_diagram(cfg: &RunConfig) -> Result<Value, Failure> {
    let path = output_path(Command::PhaseDiagram, cfg).unwrap();
    let mut out = create(&path)?;
    let io = |e| io_failure(&path, e);
    writeln!(out, "lambda1,lambda2,t0,edge1,edge2,edge3,edge4,status").map_err(io)?;
    let (mut rows, mut marked) = (0usize, 0usize);
    for &l1 in &cfg.lambda1_grid {
        for &l2 in &cfg.lambda2_grid {
            match mobility_edge_t0(l1, l2) {
                Ok(_) => {
                    let a = spectral_arcs(l1, l2)?;
                    let e = a.edges();
                    writeln!(out, "{l1},{l2},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},ok", a.t0, e[0], e[1], e[2], e[3])
                        .map_err(io)?;
                }
                Err(CmvError::NoMobilityEdge { .. }) => {
                    marked += 1;
                    writeln!(out, "{l1},{l2},,,,,,NoMobilityEdge").map_err(io)?;
                }
                Err(e) => return Err(e.into()),
            }
            rows += 1;
        }
    }
    out.flush().map_err(io)?;
    Ok(json!({"rows": rows, "no_mobility_edge": marked}))
}

fn gauge_check(cfg: &RunConfig) -> Result<Value, Failure> {
    let p = cfg.params()?;
    let twin = CoefficientSource::twin(p)?;
    let mosaic = CoefficientSource::mosaic(p);
    let window = IndexWindow::with_len(cfg.start, cfg.n)?;
    let (b1, b2) = (C64::from_polar(1.0, cfg.beta1), C64::from_polar(1.0, cfg.beta2));
    let op = assemble_finite(&twin, window, BoundaryCondition::Phase(b1), BoundaryCondition::Phase(b2))?;
    let gauge = gauge_to_standard(&rho_phases(&twin), window)?;
    let fixed = conjugate(&op, &gauge);
    let (mut alpha_defect, mut rho_defect): (f64, f64) = (0.0, 0.0);
    for (j, q) in recover_coefficients(&fixed)? {
        alpha_defect = alpha_defect.max((q.alpha - twin.alpha_at(j)).norm());
        rho_defect = rho_defect.max((q.rho - C64::new(twin.rho_at(j).norm(), 0.0)).norm());
    }
    let s1 = truncation_spectrum(&twin, window, b1, b2)?;
    let s2 = truncation_spectrum(&mosaic, window, b1, b2)?;
    let gap = hausdorff_circle(&s1.angles, &s2.angles);
    let v = json!({
        "window": [window.a, window.b],
        "unitarity_defect": fixed.unitarity_defect(),
        "alpha_defect": alpha_defect,
        "rho_defect": rho_defect,
        "spectrum_distance": gap,
    });
    if let Some(path) = &cfg.output {
        write_json(path, &v)?;
    }
    Ok(v)
}
