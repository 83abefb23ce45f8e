//! Run configuration: parsing, defaults for tolerances, and validation.
//!
//! Physical parameters have no defaults. Every numeric field is checked
//! before any computation starts.

use std::path::{Path, PathBuf};

use mastereq_core::secular::SolverOptions;
use mastereq_core::LevelSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub truncation: TruncationSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub evolve: Option<EvolveSection>,
    #[serde(default)]
    pub output: OutputSection,
    pub finite: Option<FiniteSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    pub theta: f64,
    pub gap_constant: f64,
    pub levels: LevelsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelKind {
    Affine,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsSection {
    pub kind: LevelKind,
    pub omega: Option<f64>,
    pub offset: Option<f64>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub n: usize,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

fn default_tail_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_bisect_tol")]
    pub bisect_tol: f64,
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
}

fn default_bisect_tol() -> f64 {
    SolverOptions::default().bisect_tol
}

fn default_residual_tol() -> f64 {
    SolverOptions::default().residual_tol
}

fn default_newton_max_iter() -> usize {
    SolverOptions::default().newton_max_iter
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            bisect_tol: default_bisect_tol(),
            residual_tol: default_residual_tol(),
            newton_max_iter: default_newton_max_iter(),
        }
    }
}

impl SolverSection {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            bisect_tol: self.bisect_tol,
            residual_tol: self.residual_tol,
            newton_max_iter: self.newton_max_iter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Spectral,
    Ode,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSection {
    pub init: String,
    pub tau_max: f64,
    pub samples: usize,
    #[serde(default = "default_method")]
    pub method: MethodChoice,
    #[serde(default = "default_ode_tol")]
    pub ode_tol: f64,
}

fn default_method() -> MethodChoice {
    MethodChoice::Spectral
}

fn default_ode_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Toml,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Toml]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSection {
    /// Strictly decreasing levels.
    pub levels: Vec<f64>,
    pub rho: Option<f64>,
    #[serde(default = "default_power_tol")]
    pub power_tol: f64,
    #[serde(default = "default_finite_init")]
    pub init: String,
    pub tau_max: f64,
    pub samples: usize,
}

fn default_power_tol() -> f64 {
    1e-12
}

fn default_finite_init() -> String {
    "basis_state:1".into()
}

/// Initial condition for a propagation run.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Gibbs,
    BasisState(usize),
    File(PathBuf),
    GibbsPlusMode { k: usize, eps: f64 },
}

impl InitialCondition {
    pub fn parse(text: &str, n: usize) -> CliResult<Self> {
        let bad = |why: &str| CliError::Validation(format!("init `{text}`: {why}"));
        let text = text.trim();
        if text == "gibbs" {
            return Ok(Self::Gibbs);
        }
        if let Some(rest) = text.strip_prefix("basis_state:") {
            let m: usize = rest.trim().parse().map_err(|_| bad("expected basis_state:<m>"))?;
            if m == 0 || m > n {
                return Err(bad(&format!("level must lie in 1..={n}")));
            }
            return Ok(Self::BasisState(m));
        }
        if let Some(rest) = text.strip_prefix("file:") {
            if rest.trim().is_empty() {
                return Err(bad("missing path"));
            }
            return Ok(Self::File(PathBuf::from(rest.trim())));
        }
        if let Some(rest) = text.strip_prefix("gibbs_plus_mode:") {
            let (k, eps) = rest.split_once(',').ok_or_else(|| bad("expected gibbs_plus_mode:<k>,<eps>"))?;
            let k: usize = k.trim().parse().map_err(|_| bad("mode index is not an integer"))?;
            let eps: f64 = eps.trim().parse().map_err(|_| bad("amplitude is not a number"))?;
            if k < 2 || k > n {
                return Err(bad(&format!("mode index must lie in 2..={n}")));
            }
            if !eps.is_finite() {
                return Err(bad("amplitude must be finite"));
            }
            return Ok(Self::GibbsPlusMode { k, eps });
        }
        Err(bad("expected gibbs, basis_state:<m>, file:<path> or gibbs_plus_mode:<k>,<eps>"))
    }
}

fn positive(name: &str, x: f64) -> CliResult<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(CliError::Validation(format!("{name} must be positive (got {x})")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Validation(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file. Relative `file:` initial states are
    /// resolved against the file's directory; `output.dir` stays relative to
    /// the working directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for init in [config.evolve.as_mut().map(|e| &mut e.init), config.finite.as_mut().map(|f| &mut f.init)]
            .into_iter()
            .flatten()
        {
            if let Some(rest) = init.strip_prefix("file:") {
                let p = PathBuf::from(rest.trim());
                if p.is_relative() {
                    *init = format!("file:{}", base.join(p).display());
                }
            }
        }
        Ok(config)
    }

    pub fn level_spec(&self) -> CliResult<LevelSpec> {
        let m = &self.model;
        let l = &m.levels;
        let spec = match l.kind {
            LevelKind::Affine => {
                if l.values.is_some() {
                    return Err(CliError::Validation("affine levels take omega and offset, not values".into()));
                }
                let omega = l.omega.ok_or_else(|| CliError::Validation("affine levels need omega".into()))?;
                let offset = l.offset.ok_or_else(|| CliError::Validation("affine levels need offset".into()))?;
                LevelSpec::affine(omega, offset, m.alpha, m.theta, m.gap_constant)
            }
            LevelKind::Explicit => {
                if l.omega.is_some() || l.offset.is_some() {
                    return Err(CliError::Validation("explicit levels take values, not omega/offset".into()));
                }
                let values =
                    l.values.clone().ok_or_else(|| CliError::Validation("explicit levels need values".into()))?;
                LevelSpec::explicit(values, m.alpha, m.theta, m.gap_constant)
            }
        };
        spec.map_err(|e| CliError::Validation(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let spec = self.level_spec()?;
        let n = self.truncation.n;
        if n < 2 {
            return Err(CliError::Validation(format!("truncation n must be at least 2 (got {n})")));
        }
        if let Some(len) = spec.level_count() {
            if len != n {
                return Err(CliError::Validation(format!("explicit levels list {len} values but n = {n}")));
            }
        }
        positive("tail_tol", self.truncation.tail_tol)?;
        self.solver.options().validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if let Some(ev) = &self.evolve {
            InitialCondition::parse(&ev.init, n)?;
            positive("evolve.tau_max", ev.tau_max)?;
            positive("evolve.ode_tol", ev.ode_tol)?;
            if ev.samples < 2 {
                return Err(CliError::Validation("evolve.samples must be at least 2".into()));
            }
        }
        if self.output.formats.is_empty() {
            return Err(CliError::Validation("output.formats must name at least one format".into()));
        }
        if let Some(fin) = &self.finite {
            if fin.levels.len() < 2 {
                return Err(CliError::Validation("finite.levels needs at least two values".into()));
            }
            if fin.levels.windows(2).any(|w| w[1] >= w[0] || w[1].is_nan()) {
                return Err(CliError::Validation("finite.levels must be strictly decreasing".into()));
            }
            if let Some(rho) = fin.rho {
                positive("finite.rho", rho)?;
            }
            positive("finite.power_tol", fin.power_tol)?;
            positive("finite.tau_max", fin.tau_max)?;
            if fin.samples < 2 {
                return Err(CliError::Validation("finite.samples must be at least 2".into()));
            }
            InitialCondition::parse(&fin.init, fin.levels.len())?;
        }
        Ok(())
    }
}
