//! Run configuration: command-line flags merged over an optional flat JSON
//! file. Every flag has a JSON key of the same name with `-` replaced by `_`.

use crate::{Command, Failure};
use clap::Args;
use gecmv::model::{MosaicParams, GOLDEN};
use serde::Deserialize;
use std::path::PathBuf;
use std::str::FromStr;

/// Rotation number: a number in `(0, 1)` or the keyword `golden`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phi(pub f64);

impl FromStr for Phi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("golden") {
            return Ok(Phi(GOLDEN));
        }
        s.parse::<f64>().map(Phi).map_err(|_| format!("expected a number or `golden`, got {s:?}"))
    }
}

impl<'de> Deserialize<'de> for Phi {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Name(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Phi(x)),
            Raw::Name(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// Flat JSON object with any of the options below; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Coupling of the constant coins, in [0, 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda1: Option<f64>,
    /// Coupling of the quasi-periodic coins, in [0, 1].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda2: Option<f64>,
    /// Rotation number, or `golden` for (sqrt 5 - 1)/2 [default: golden].
    #[arg(long, global = true)]
    pub phi: Option<Phi>,
    /// Phase of the quasi-periodic sequence [default: 0].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Spacing of the quasi-periodic coins [default: 2].
    #[arg(long, global = true)]
    pub s: Option<u32>,
    /// Number of sites in the truncation window [default: 256].
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// First site of the truncation window [default: 0].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub start: Option<i64>,
    /// Left boundary phase as an angle, beta1 = e^{i beta1} [default: 0].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta1: Option<f64>,
    /// Right boundary phase as an angle [default: 0].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta2: Option<f64>,
    /// Spectral angle z = e^{it} (lyapunov, classify).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Imaginary phase shift of the cocycle [default: 0].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Cocycle family: transfer-a, transfer-a-plus, szego, szego-pp, mz [default: szego-pp].
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Coefficient source: mosaic, twin or uamo [default: mosaic].
    #[arg(long, global = true)]
    pub source: Option<String>,
    /// Cocycle steps per phase orbit [default: 1000000].
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Number of starting phases averaged [default: 8].
    #[arg(long, global = true)]
    pub phases: Option<usize>,
    /// Phase samples theta + k/theta_samples in a scan [default: 1].
    #[arg(long, global = true)]
    pub theta_samples: Option<usize>,
    /// Boundary phase samples e^{2 pi i j/beta_samples} in a scan [default: 1].
    #[arg(long, global = true)]
    pub beta_samples: Option<usize>,
    /// Comma-separated lambda1 values (phase-diagram).
    #[arg(long, global = true, value_delimiter = ',')]
    pub lambda1_grid: Option<Vec<f64>>,
    /// Comma-separated lambda2 values (phase-diagram).
    #[arg(long, global = true, value_delimiter = ',')]
    pub lambda2_grid: Option<Vec<f64>>,
    /// Verification suite (verify) [default: identities].
    #[arg(long, global = true)]
    pub suite: Option<String>,
    /// Exponent above which classify reports supercritical [default: 0.02].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub super_threshold: Option<f64>,
    /// Exponent below which classify reports subcritical [default: 0.005].
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub sub_threshold: Option<f64>,
    /// Recorded in the summary; no computation is randomized [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (CSV for spectrum, mobility-scan, phase-diagram; JSON otherwise).
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true, env = "CMV_THREADS")]
    pub threads: Option<usize>,
}

/// The JSON file: same keys as the flags, plus `subcommand`.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    subcommand: Option<String>,
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    phi: Option<Phi>,
    theta: Option<f64>,
    s: Option<u32>,
    n: Option<usize>,
    start: Option<i64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    t: Option<f64>,
    epsilon: Option<f64>,
    family: Option<String>,
    source: Option<String>,
    steps: Option<usize>,
    phases: Option<usize>,
    theta_samples: Option<usize>,
    beta_samples: Option<usize>,
    lambda1_grid: Option<Vec<f64>>,
    lambda2_grid: Option<Vec<f64>>,
    suite: Option<String>,
    super_threshold: Option<f64>,
    sub_threshold: Option<f64>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    threads: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub phi: f64,
    pub theta: f64,
    pub s: u32,
    pub n: usize,
    pub start: i64,
    pub beta1: f64,
    pub beta2: f64,
    pub t: Option<f64>,
    pub epsilon: f64,
    pub family: String,
    pub source: String,
    pub steps: usize,
    pub phases: usize,
    pub theta_samples: usize,
    pub beta_samples: usize,
    pub lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    pub suite: String,
    pub super_threshold: Option<f64>,
    pub sub_threshold: Option<f64>,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    has_lambdas: bool,
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn finite(name: &str, v: f64) -> Result<(), Failure> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite")))
    }
}

impl RunConfig {
    pub fn resolve(cmd: Command, flags: &Flags) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| invalid(format!("config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        if let Some(sub) = &file.subcommand {
            if sub != cmd.name() {
                return Err(invalid(format!("config is for subcommand {sub:?}, not {:?}", cmd.name())));
            }
        }
        let f = flags.clone();
        let lambda1 = f.lambda1.or(file.lambda1);
        let lambda2 = f.lambda2.or(file.lambda2);
        let cfg = RunConfig {
            has_lambdas: lambda1.is_some() && lambda2.is_some(),
            lambda1: lambda1.unwrap_or(f64::NAN),
            lambda2: lambda2.unwrap_or(f64::NAN),
            phi: f.phi.or(file.phi).unwrap_or(Phi(GOLDEN)).0,
            theta: f.theta.or(file.theta).unwrap_or(0.0),
            s: f.s.or(file.s).unwrap_or(2),
            n: f.n.or(file.n).unwrap_or(256),
            start: f.start.or(file.start).unwrap_or(0),
            beta1: f.beta1.or(file.beta1).unwrap_or(0.0),
            beta2: f.beta2.or(file.beta2).unwrap_or(0.0),
            t: f.t.or(file.t),
            epsilon: f.epsilon.or(file.epsilon).unwrap_or(0.0),
            family: f.family.or(file.family).unwrap_or_else(|| "szego-pp".into()),
            source: f.source.or(file.source).unwrap_or_else(|| "mosaic".into()),
            steps: f.steps.or(file.steps).unwrap_or(1_000_000),
            phases: f.phases.or(file.phases).unwrap_or(8),
            theta_samples: f.theta_samples.or(file.theta_samples).unwrap_or(1),
            beta_samples: f.beta_samples.or(file.beta_samples).unwrap_or(1),
            lambda1_grid: f.lambda1_grid.or(file.lambda1_grid).unwrap_or_default(),
            lambda2_grid: f.lambda2_grid.or(file.lambda2_grid).unwrap_or_default(),
            suite: f.suite.or(file.suite).unwrap_or_else(|| "identities".into()),
            super_threshold: f.super_threshold.or(file.super_threshold),
            sub_threshold: f.sub_threshold.or(file.sub_threshold),
            seed: f.seed.or(file.seed).unwrap_or(0),
            output: f.output.or(file.output),
            threads: f.threads.or(file.threads),
        };
        cfg.validate(cmd)?;
        Ok(cfg)
    }

    fn validate(&self, cmd: Command) -> Result<(), Failure> {
        for (name, v) in [
            ("phi", self.phi),
            ("theta", self.theta),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("epsilon", self.epsilon),
        ] {
            finite(name, v)?;
        }
        if let Some(t) = self.t {
            finite("t", t)?;
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        if self.n < 2 {
            return Err(invalid(format!("n = {} is below 2", self.n)));
        }
        if self.phases == 0 || self.theta_samples == 0 || self.beta_samples == 0 {
            return Err(invalid("phases, theta_samples and beta_samples must be at least 1"));
        }
        let needs_lambdas = !matches!(cmd, Command::PhaseDiagram | Command::Verify);
        if needs_lambdas {
            if !self.has_lambdas {
                return Err(invalid(format!("{} needs lambda1 and lambda2", cmd.name())));
            }
            for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(invalid(format!("{name} = {v} is outside [0, 1]")));
                }
            }
        }
        if cmd == Command::PhaseDiagram {
            if self.lambda1_grid.is_empty() || self.lambda2_grid.is_empty() {
                return Err(invalid("phase-diagram needs lambda1_grid and lambda2_grid"));
            }
            for &v in self.lambda1_grid.iter().chain(&self.lambda2_grid) {
                if !(v > 0.0 && v < 1.0) {
                    return Err(invalid(format!("grid value {v} is outside (0, 1)")));
                }
            }
        }
        if cmd == Command::Verify && self.suite != "identities" {
            return Err(invalid(format!("unknown suite {:?} (available: identities)", self.suite)));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<MosaicParams, Failure> {
        Ok(MosaicParams::new(self.lambda1, self.lambda2, self.phi, self.theta, self.s)?)
    }

    pub fn require_t(&self) -> Result<f64, Failure> {
        self.t.ok_or_else(|| invalid("the spectral angle t is required"))
    }
}
