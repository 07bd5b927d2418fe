//! Experiment configuration: a TOML document with typed sections.
//!
//! ```toml
//! particles = 10000
//! x0 = 1.0
//! seed = 42
//! weight_schedule = "uniform"               # uniform | linear
//! estimators = ["bel", "pathwise", "central_fd"]
//! output = "out"                            # directory; MFSDE_OUTPUT_DIR overrides it
//! fd_bump = 0.01                            # optional, central differences only
//!
//! [model]
//! id = "mean_field_ou"
//! params = { a = -1.0, c = 0.5 }
//!
//! [grid]
//! T = 1.0
//! steps = 256
//!
//! [payoff]                                  # required by `delta`
//! id = "identity"
//! params = {}
//! epsilon = 0.5                             # optional
//!
//! [mollify]                                 # optional
//! bandwidth = 0.1
//! quadrature_order = 8
//!
//! [picard]                                  # optional, defaults shown
//! max_iter = 10
//! tol = 1e-3
//!
//! [hoelder]                                 # optional; default points x0 - 1, x0, x0 + 1
//! points = [0.0, 0.5, 1.0]
//!
//! [converge]                                # required by `converge`
//! axis = "steps"                            # steps | particles
//! values = [64, 128, 256, 512]
//! metric = "abs_bias"                       # abs_bias | w1_to_oracle
//!
//! [lamperti]                                # optional, defaults shown
//! sigma = "sqrt_one_plus_square"            # unit | sqrt_one_plus_square
//! anchor = 0.0
//! probes = 1000
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use mfsde_core::bel::BUILTIN_PAYOFFS;
use mfsde_core::coefficients::BUILTIN_MODELS;
use mfsde_core::{Method, Params};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAX_STEPS: usize = 1 << 20;
pub const MAX_PARTICLES: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub particles: usize,
    pub x0: f64,
    pub seed: u64,
    #[serde(default = "default_schedule")]
    pub weight_schedule: String,
    #[serde(default)]
    pub estimators: Vec<String>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_bump: Option<f64>,
    pub model: ModelSection,
    pub grid: GridSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollify: Option<MollifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub picard: Option<PicardSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hoelder: Option<HoelderSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lamperti: Option<LampertiSection>,
}

fn default_schedule() -> String {
    "uniform".into()
}

fn default_output() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub id: String,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffSection {
    pub id: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifySection {
    pub bandwidth: f64,
    pub quadrature_order: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iter() -> usize {
    10
}

fn default_tol() -> f64 {
    1e-3
}

impl Default for PicardSection {
    fn default() -> Self {
        Self {
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoelderSection {
    pub points: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Steps,
    Particles,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Steps => "steps",
            Axis::Particles => "particles",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AbsBias,
    W1ToOracle,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::AbsBias => "abs_bias",
            Metric::W1ToOracle => "w1_to_oracle",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSection {
    pub axis: Axis,
    pub values: Vec<usize>,
    #[serde(default = "default_metric")]
    pub metric: Metric,
}

fn default_metric() -> Metric {
    Metric::AbsBias
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaId {
    Unit,
    SqrtOnePlusSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LampertiSection {
    #[serde(default = "default_sigma")]
    pub sigma: SigmaId,
    #[serde(default)]
    pub anchor: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_sigma() -> SigmaId {
    SigmaId::SqrtOnePlusSquare
}

fn default_probes() -> usize {
    1000
}

impl Default for LampertiSection {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            anchor: 0.0,
            probes: default_probes(),
        }
    }
}

/// A configuration that failed to parse or is out of range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("`{name}` must be a positive finite number, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string().trim_end().replace('\n', " ")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Range checks beyond what the types enforce.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(2..=MAX_PARTICLES).contains(&self.particles) {
            return Err(bad(format!(
                "`particles` must be in 2..={MAX_PARTICLES}, got {}",
                self.particles
            )));
        }
        if !self.x0.is_finite() {
            return Err(bad("`x0` must be finite"));
        }
        positive("grid.T", self.grid.horizon)?;
        if !(1..=MAX_STEPS).contains(&self.grid.steps) {
            return Err(bad(format!(
                "`grid.steps` must be in 1..={MAX_STEPS}, got {}",
                self.grid.steps
            )));
        }
        if !BUILTIN_MODELS.contains(&self.model.id.as_str()) {
            return Err(bad(format!(
                "unknown model `{}`; expected one of {}",
                self.model.id,
                BUILTIN_MODELS.join(", ")
            )));
        }
        if !["uniform", "linear"].contains(&self.weight_schedule.as_str()) {
            return Err(bad(format!(
                "unknown weight_schedule `{}`; expected uniform or linear",
                self.weight_schedule
            )));
        }
        for e in &self.estimators {
            e.parse::<Method>()
                .map_err(|_| bad(format!("unknown estimator `{e}`; expected bel, pathwise or central_fd")))?;
        }
        if let Some(h) = self.fd_bump {
            positive("fd_bump", h)?;
        }
        if let Some(p) = &self.payoff {
            if !BUILTIN_PAYOFFS.contains(&p.id.as_str()) {
                return Err(bad(format!(
                    "unknown payoff `{}`; expected one of {}",
                    p.id,
                    BUILTIN_PAYOFFS.join(", ")
                )));
            }
            if let Some(eps) = p.epsilon {
                positive("payoff.epsilon", eps)?;
            }
        }
        if let Some(m) = &self.mollify {
            positive("mollify.bandwidth", m.bandwidth)?;
            if !(2..=64).contains(&m.quadrature_order) {
                return Err(bad(format!(
                    "`mollify.quadrature_order` must be in 2..=64, got {}",
                    m.quadrature_order
                )));
            }
        }
        if let Some(p) = &self.picard {
            if !(1..=1000).contains(&p.max_iter) {
                return Err(bad(format!(
                    "`picard.max_iter` must be in 1..=1000, got {}",
                    p.max_iter
                )));
            }
            positive("picard.tol", p.tol)?;
        }
        if let Some(h) = &self.hoelder {
            if h.points.len() < 2 || h.points.iter().any(|p| !p.is_finite()) {
                return Err(bad("`hoelder.points` needs at least two finite values"));
            }
        }
        if let Some(c) = &self.converge {
            if c.values.is_empty() {
                return Err(bad("`converge.values` must not be empty"));
            }
            let (lo, hi) = match c.axis {
                Axis::Steps => (1, MAX_STEPS),
                Axis::Particles => (2, MAX_PARTICLES),
            };
            if let Some(v) = c.values.iter().find(|v| !(lo..=hi).contains(*v)) {
                return Err(bad(format!("`converge.values` entry {v} is outside {lo}..={hi}")));
            }
        }
        if let Some(l) = &self.lamperti {
            if !l.anchor.is_finite() {
                return Err(bad("`lamperti.anchor` must be finite"));
            }
            if !(1..=1_000_000).contains(&l.probes) {
                return Err(bad(format!(
                    "`lamperti.probes` must be in 1..=1000000, got {}",
                    l.probes
                )));
            }
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> String {
        let canonical = toml::to_string(self).expect("configuration serialises");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
