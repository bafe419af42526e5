//! Run configuration: one JSON document, with command-line flags layered on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use teffect_core::ann::{Activation, CvGrid, NetworkConfig, WeightBound};
use teffect_core::sim::{CvMode, Design, EstimatorKind, SimConfig, SimEstimand};
use teffect_core::{EstimandSpec, LossSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Estimate,
    Simulate,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

/// Which point estimator `estimate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    #[default]
    Ipw,
    Or,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRoles {
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default = "default_treatment")]
    pub treatment: String,
    /// Every other column when absent.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
}

fn default_outcome() -> String {
    "Y".into()
}
fn default_treatment() -> String {
    "D".into()
}

impl Default for ColumnRoles {
    fn default() -> Self {
        Self {
            outcome: default_outcome(),
            treatment: default_treatment(),
            covariates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Squared,
    Check,
    Expectile,
}

/// `"ATE"`, `"QTT(0.25)"`, `"ETE(0.3)"` or a spelled-out loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EstimandRequest {
    Short(String),
    Detailed {
        #[serde(default)]
        name: Option<String>,
        loss: LossName,
        #[serde(default)]
        tau: Option<f64>,
        /// Treated-subgroup level `d'`; population effect when absent.
        #[serde(default)]
        subgroup: Option<usize>,
        /// Defaults to last level minus level 0.
        #[serde(default)]
        contrast: Option<Vec<f64>>,
    },
}

impl EstimandRequest {
    pub fn name(&self) -> String {
        match self {
            EstimandRequest::Short(s) => s.trim().to_ascii_uppercase(),
            EstimandRequest::Detailed {
                name: Some(n), ..
            } => n.clone(),
            EstimandRequest::Detailed {
                loss, tau, subgroup, ..
            } => {
                let mut s = format!("{loss:?}").to_ascii_lowercase();
                if let Some(t) = tau {
                    s.push_str(&format!("({t})"));
                }
                if let Some(d) = subgroup {
                    s.push_str(&format!("|D={d}"));
                }
                s
            }
        }
    }

    pub fn is_squared(&self) -> bool {
        match self {
            EstimandRequest::Short(s) => matches!(s.trim().to_ascii_uppercase().as_str(), "ATE" | "ATT"),
            EstimandRequest::Detailed { loss, .. } => *loss == LossName::Squared,
        }
    }

    /// Builds the estimand for a sample with `levels` treatment levels.
    pub fn to_spec(&self, levels: usize) -> Result<EstimandSpec, CliError> {
        let treated = levels.saturating_sub(1);
        match self {
            EstimandRequest::Short(s) => {
                let t = s.trim().to_ascii_uppercase();
                let (head, tau) = match t.split_once('(') {
                    Some((h, rest)) => {
                        let v = rest
                            .strip_suffix(')')
                            .and_then(|v| v.parse::<f64>().ok())
                            .ok_or_else(|| CliError::Config(format!("cannot parse estimand {s:?}")))?;
                        (h.to_string(), Some(checked_tau(v)?))
                    }
                    None => (t.clone(), None),
                };
                let loss = match (head.get(..1), tau) {
                    (Some("A"), None) => LossSpec::squared(),
                    (Some("Q"), Some(tau)) => LossSpec::check(tau),
                    (Some("E"), Some(tau)) => LossSpec::asymmetric_squared(tau),
                    _ => return Err(unknown_estimand(s)),
                };
                let spec = match head.get(1..) {
                    Some("TE") => EstimandSpec::population(loss),
                    Some("TT") => EstimandSpec::treated(loss, treated),
                    _ => return Err(unknown_estimand(s)),
                };
                Ok(spec.with_difference(levels))
            }
            EstimandRequest::Detailed {
                loss,
                tau,
                subgroup,
                contrast,
                ..
            } => {
                let loss = match (loss, tau) {
                    (LossName::Squared, _) => LossSpec::squared(),
                    (LossName::Check, Some(t)) => LossSpec::check(checked_tau(*t)?),
                    (LossName::Expectile, Some(t)) => LossSpec::asymmetric_squared(checked_tau(*t)?),
                    (l, None) => return Err(CliError::Config(format!("{l:?} loss needs tau"))),
                };
                let spec = match subgroup {
                    Some(d) => EstimandSpec::treated(loss, *d),
                    None => EstimandSpec::population(loss),
                };
                Ok(match contrast {
                    Some(a) => spec.with_contrast(a.clone()),
                    None => spec.with_difference(levels),
                })
            }
        }
    }
}

fn unknown_estimand(s: &str) -> CliError {
    CliError::Config(format!(
        "unknown estimand {s:?}; expected ATE, ATT, QTE(tau), QTT(tau), ETE(tau) or ETT(tau)"
    ))
}

fn checked_tau(t: f64) -> Result<f64, CliError> {
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(CliError::Config(format!("tau must lie in (0, 1), got {t}")))
    }
}

/// Any subset of the grid; missing fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridOverrides {
    pub widths: Option<Vec<Vec<usize>>>,
    pub learning_rates: Option<Vec<f64>>,
    pub batch_sizes: Option<Vec<usize>>,
    pub epochs: Option<Vec<usize>>,
    pub folds: Option<usize>,
    pub activation: Option<Activation>,
    pub weight_bound: Option<WeightBound>,
}

impl GridOverrides {
    pub fn apply(&self, mut grid: CvGrid) -> CvGrid {
        if let Some(v) = &self.widths {
            grid.widths = v.clone();
        }
        if let Some(v) = &self.learning_rates {
            grid.learning_rates = v.clone();
        }
        if let Some(v) = &self.batch_sizes {
            grid.batch_sizes = v.clone();
        }
        if let Some(v) = &self.epochs {
            grid.epochs = v.clone();
        }
        if let Some(v) = self.folds {
            grid.folds = v;
        }
        if let Some(v) = self.activation {
            grid.activation = v;
        }
        if let Some(v) = self.weight_bound {
            grid.weight_bound = v;
        }
        grid
    }
}

/// Fixed network settings; grid search is skipped when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedNetworks {
    pub propensity: NetworkConfig,
    pub influence: NetworkConfig,
    #[serde(default)]
    pub outcome: Option<NetworkConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

impl OutputSpec {
    /// Explicit format, else from the extension, else JSON.
    pub fn resolved_format(&self) -> Format {
        self.format.unwrap_or_else(|| match self.path.as_deref().and_then(Path::extension) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_sim_n")]
    pub n: usize,
    #[serde(default = "default_sim_p")]
    pub p: usize,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default = "default_sim_estimands")]
    pub estimands: Vec<String>,
    #[serde(default = "default_sim_estimators")]
    pub estimators: Vec<String>,
    #[serde(default)]
    pub design: Design,
    #[serde(default)]
    pub cv_mode: CvMode,
    /// R = 200 and the library's default grid.
    #[serde(default)]
    pub full_scale: bool,
    #[serde(default)]
    pub truth_draws: Option<usize>,
}

fn default_sim_n() -> usize {
    2000
}
fn default_sim_p() -> usize {
    5
}
fn default_sim_estimands() -> Vec<String> {
    vec!["ATE".into()]
}
fn default_sim_estimators() -> Vec<String> {
    vec!["ANN-IPW".into()]
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            n: default_sim_n(),
            p: default_sim_p(),
            replications: None,
            estimands: default_sim_estimands(),
            estimators: default_sim_estimators(),
            design: Design::default(),
            cv_mode: CvMode::default(),
            full_scale: false,
            truth_draws: None,
        }
    }
}

pub fn parse_estimator(name: &str) -> Result<EstimatorKind, CliError> {
    EstimatorKind::parse(name).ok_or_else(|| {
        let valid: Vec<&str> = EstimatorKind::ALL.iter().map(|k| k.label()).collect();
        CliError::Config(format!("unknown estimator {name:?}; valid names: {}", valid.join(", ")))
    })
}

pub fn parse_sim_estimand(name: &str) -> Result<SimEstimand, CliError> {
    SimEstimand::parse(name).ok_or_else(|| {
        CliError::Config(format!("unknown simulation estimand {name:?}; expected ATE, ATT, QTE(tau) or QTT(tau)"))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub columns: ColumnRoles,
    #[serde(default = "default_estimands")]
    pub estimands: Vec<EstimandRequest>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_trim")]
    pub trim: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimator: EstimatorChoice,
    #[serde(default)]
    pub grid: GridOverrides,
    #[serde(default)]
    pub networks: Option<FixedNetworks>,
    #[serde(default)]
    pub output: OutputSpec,
    /// CSV of `(x, g_0(x), g_1(x), ...)` along one covariate, others at their means.
    #[serde(default)]
    pub emit_curves: Option<PathBuf>,
    #[serde(default)]
    pub curve_covariate: usize,
    #[serde(default)]
    pub simulation: SimulationSection,
}

fn default_estimands() -> Vec<EstimandRequest> {
    vec![EstimandRequest::Short("ATE".into())]
}
fn default_alpha() -> f64 {
    0.05
}
fn default_trim() -> f64 {
    teffect_core::estimators::DEFAULT_TRIM_FLOOR
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn check(&self, command: Command) -> Result<(), CliError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(CliError::Config(format!("config is for {c:?}, command is {command:?}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.trim > 0.0 && self.trim < 0.5) {
            return Err(CliError::Config(format!("trim must lie in (0, 0.5), got {}", self.trim)));
        }
        if self.estimands.is_empty() {
            return Err(CliError::Config("no estimands requested".into()));
        }
        Ok(())
    }

    /// Cross-validation grid: library defaults, then overrides, seeded from `seed`.
    pub fn cv_grid(&self) -> CvGrid {
        let mut g = self.grid.apply(CvGrid::default());
        g.seed = self.seed;
        g
    }

    /// The simulation harness configuration described by this document.
    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let s = &self.simulation;
        let estimands = s.estimands.iter().map(|e| parse_sim_estimand(e)).collect::<Result<Vec<_>, _>>()?;
        let estimators = s.estimators.iter().map(|e| parse_estimator(e)).collect::<Result<Vec<_>, _>>()?;
        let mut cfg = SimConfig::desk(s.n, s.p, estimands, estimators);
        let mut grid = cfg.grid.clone();
        if s.full_scale {
            cfg = cfg.full_scale();
            grid = CvGrid::default();
        }
        cfg.grid = self.grid.apply(grid);
        if let Some(r) = s.replications {
            cfg.replications = r;
        }
        if let Some(t) = s.truth_draws {
            cfg.truth_draws = t;
        }
        if let Some(f) = &self.networks {
            cfg.fixed_configs = Some(teffect_core::sim::FixedConfigs {
                propensity: f.propensity.clone(),
                influence: f.influence.clone(),
                outcome: f.outcome.clone().unwrap_or_else(|| f.influence.clone()),
            });
        }
        cfg.base_seed = self.seed;
        cfg.design = s.design;
        cfg.cv_mode = s.cv_mode;
        cfg.pipeline.alpha = self.alpha;
        cfg.pipeline.trim_floor = self.trim;
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}
