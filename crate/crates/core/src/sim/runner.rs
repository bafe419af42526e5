//! Replication engine and metric aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{generate_design, Design, DgpDraw};
use super::glm::{glm_ipw, glm_or};
use super::oracle::oracle_estimate;
use super::seed::mix;
use super::truth::{true_effect_with, SimEstimand, TruthValue, DEFAULT_TRUTH_DRAWS, DEFAULT_TRUTH_SEED};
use crate::ann::{CvGrid, NetworkConfig};
use crate::error::{Error, Result};
use crate::estimand::EstimandSpec;
use crate::loss::LossSpec;
use crate::pipeline::{
    fit_outcome_networks, fit_propensity_set, ipw_with_propensity, or_effect_from_predictions, select_influence_configs,
    select_outcome_configs, select_propensity_configs, EffectEstimate, PipelineOptions,
};

/// Fraction of failed replications above which a cell is reported invalid.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;
const PILOT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    AnnIpw,
    AnnOr,
    GlmIpw,
    GlmOr,
    Oracle,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::AnnIpw,
        EstimatorKind::AnnOr,
        EstimatorKind::GlmIpw,
        EstimatorKind::GlmOr,
        EstimatorKind::Oracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::AnnIpw => "ANN-IPW",
            EstimatorKind::AnnOr => "ANN-OR",
            EstimatorKind::GlmIpw => "GLM-IPW",
            EstimatorKind::GlmOr => "GLM-OR",
            EstimatorKind::Oracle => "Oracle",
        }
    }

    /// Accepts labels (`ANN-IPW`) and snake case (`ann_ipw`), case-insensitive.
    pub fn parse(s: &str) -> Option<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL.into_iter().find(|k| k.label().to_ascii_lowercase().replace('-', "_") == norm)
    }

    fn is_outcome_regression(self) -> bool {
        matches!(self, EstimatorKind::AnnOr | EstimatorKind::GlmOr)
    }

    /// Outcome-regression estimators exist for mean estimands only.
    pub fn supports(self, est: SimEstimand) -> bool {
        !(self.is_outcome_regression() && est.is_quantile())
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvMode {
    /// Grid search once on an independent pilot draw; settings reused by every replication.
    #[default]
    Pilot,
    /// Grid search inside every replication.
    PerReplication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub design: Design,
    pub estimands: Vec<SimEstimand>,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "CvGrid::desk")]
    pub grid: CvGrid,
    #[serde(default)]
    pub cv_mode: CvMode,
    /// Skip the grid search and use these settings for every estimand.
    #[serde(default)]
    pub fixed_configs: Option<FixedConfigs>,
    #[serde(default)]
    pub pipeline: PipelineOptions,
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
    #[serde(default = "default_truth_seed")]
    pub truth_seed: u64,
}

fn default_truth_draws() -> usize {
    DEFAULT_TRUTH_DRAWS
}
fn default_truth_seed() -> u64 {
    DEFAULT_TRUTH_SEED
}

/// Network settings shared by all estimands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedConfigs {
    pub propensity: NetworkConfig,
    pub influence: NetworkConfig,
    pub outcome: NetworkConfig,
}

impl SimConfig {
    /// Desk-scale defaults: 100 replications, halved grid, pilot cross-validation.
    pub fn desk(n: usize, p: usize, estimands: Vec<SimEstimand>, estimators: Vec<EstimatorKind>) -> Self {
        Self {
            n,
            p,
            replications: 100,
            base_seed: 0,
            design: Design::Nonlinear,
            estimands,
            estimators,
            grid: CvGrid::desk(),
            cv_mode: CvMode::Pilot,
            fixed_configs: None,
            pipeline: PipelineOptions {
                sieve_diagnostic: false,
                ..PipelineOptions::default()
            },
            truth_draws: DEFAULT_TRUTH_DRAWS,
            truth_seed: DEFAULT_TRUTH_SEED,
        }
    }

    /// Full-scale replication count with the full default grid.
    pub fn full_scale(mut self) -> Self {
        self.replications = 200;
        self.grid = CvGrid {
            seed: self.grid.seed,
            ..CvGrid::default()
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.p < super::dgp::ACTIVE_COVARIATES {
            return Err(Error::InvalidConfig(format!("p must be at least 5, got {}", self.p)));
        }
        if self.n < 20 {
            return Err(Error::InvalidConfig(format!("n = {} is too small", self.n)));
        }
        if self.estimands.is_empty() || self.estimators.is_empty() {
            return Err(Error::InvalidConfig("at least one estimand and one estimator are required".into()));
        }
        if !(self.pipeline.alpha > 0.0 && self.pipeline.alpha < 1.0) {
            return Err(Error::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        self.grid.validate()
    }

    /// Supported (estimand, estimator) cells in configuration order.
    pub fn cells(&self) -> Vec<(SimEstimand, EstimatorKind)> {
        self.estimands
            .iter()
            .flat_map(|&e| self.estimators.iter().filter(move |k| k.supports(e)).map(move |&k| (e, k)))
            .collect()
    }

    pub fn replication_seed(&self, r: usize) -> u64 {
        mix(self.base_seed, r as u64)
    }

    fn needs(&self, pred: impl Fn(EstimatorKind) -> bool) -> bool {
        self.cells().iter().any(|&(_, k)| pred(k))
    }
}

/// Loss-based definition of a simulation estimand on two levels, contrast `(-1, 1)`.
pub fn estimand_spec(est: SimEstimand) -> EstimandSpec {
    let spec = match est {
        SimEstimand::Ate => EstimandSpec::population(LossSpec::squared()),
        SimEstimand::Att => EstimandSpec::treated(LossSpec::squared(), 1),
        SimEstimand::Qte { tau } => EstimandSpec::population(LossSpec::check(tau)),
        SimEstimand::Qtt { tau } => EstimandSpec::treated(LossSpec::check(tau), 1),
    };
    spec.with_difference(2)
}

/// Network settings used for a run: one propensity set plus per-estimand `E_d` settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedConfigs {
    pub propensity: Vec<NetworkConfig>,
    /// Keyed by estimand label.
    pub influence: BTreeMap<String, Vec<NetworkConfig>>,
    pub outcome: Vec<NetworkConfig>,
}

impl SelectedConfigs {
    fn fixed(f: &FixedConfigs, config: &SimConfig) -> Self {
        Self {
            propensity: vec![f.propensity.clone()],
            influence: config
                .estimands
                .iter()
                .map(|e| (e.label(), vec![f.influence.clone(); 2]))
                .collect(),
            outcome: vec![f.outcome.clone(); 2],
        }
    }
}

fn with_seed(v: &[NetworkConfig], seed: u64, slot: u64) -> Vec<NetworkConfig> {
    v.iter()
        .enumerate()
        .map(|(k, c)| NetworkConfig {
            seed: mix(seed, slot + k as u64),
            ..c.clone()
        })
        .collect()
}

/// Grid search for every network nuisance the configuration needs, on one draw.
pub fn select_configs(draw: &DgpDraw, config: &SimConfig, seed: u64) -> Result<SelectedConfigs> {
    let sample = &draw.sample;
    let grid = CvGrid { seed, ..config.grid.clone() };
    let needs_ann = config.needs(|k| matches!(k, EstimatorKind::AnnIpw | EstimatorKind::AnnOr));
    if !needs_ann {
        return Ok(SelectedConfigs {
            propensity: Vec::new(),
            influence: BTreeMap::new(),
            outcome: Vec::new(),
        });
    }
    let prop: Vec<NetworkConfig> = select_propensity_configs(sample, &grid)?.into_iter().map(|c| c.best).collect();
    let mut influence = BTreeMap::new();
    if config.needs(|k| k == EstimatorKind::AnnIpw) {
        let (ps, _) = fit_propensity_set(sample, &with_seed(&prop, seed, 0x100), config.pipeline.trim_floor)?;
        for &e in &config.estimands {
            let cv = select_influence_configs(sample, &estimand_spec(e), &ps, &grid)?;
            influence.insert(e.label(), cv.into_iter().map(|c| c.best).collect());
        }
    }
    let outcome = if config.needs(|k| k == EstimatorKind::AnnOr) {
        select_outcome_configs(sample, &grid)?.into_iter().map(|c| c.best).collect()
    } else {
        Vec::new()
    };
    Ok(SelectedConfigs {
        propensity: prop,
        influence,
        outcome,
    })
}

/// One cell of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub trimmed: usize,
}

impl CellResult {
    fn from_effect(e: &EffectEstimate) -> Self {
        let iv = e.headline();
        Self {
            estimate: iv.estimate,
            se: iv.se,
            lower: iv.lower,
            upper: iv.upper,
            trimmed: e.point.trimmed.iter().sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    /// Same order as [`SimConfig::cells`]; `Err` carries the failure message.
    pub cells: Vec<std::result::Result<CellResult, String>>,
}

/// Runs every cell on one replication draw.
pub fn run_replication(config: &SimConfig, selected: Option<&SelectedConfigs>, r: usize) -> ReplicationResult {
    let seed = config.replication_seed(r);
    let cells = config.cells();
    let fail_all = |msg: String| ReplicationResult {
        replication: r,
        seed,
        cells: vec![Err(msg); cells.len()],
    };
    let draw = match generate_design(config.design, config.n, config.p, seed) {
        Ok(d) => d,
        Err(e) => return fail_all(e.to_string()),
    };
    let owned;
    let selected = match (selected, config.cv_mode) {
        (Some(s), _) => s,
        (None, _) => match select_configs(&draw, config, mix(seed, 0xc5)) {
            Ok(s) => {
                owned = s;
                &owned
            }
            Err(e) => return fail_all(format!("cross-validation: {e}")),
        },
    };
    let opts = &config.pipeline;
    let sample = &draw.sample;

    let ann_ps = if config.needs(|k| matches!(k, EstimatorKind::AnnIpw | EstimatorKind::AnnOr)) {
        Some(fit_propensity_set(sample, &with_seed(&selected.propensity, seed, 0x100), opts.trim_floor).map(|(ps, _)| ps))
    } else {
        None
    };
    let ann_or_preds = if config.needs(|k| k == EstimatorKind::AnnOr) {
        Some(
            fit_outcome_networks(sample, &with_seed(&selected.outcome, seed, 0x300))
                .map(|nets| nets.iter().map(|g| g.predict_rows(sample.covariates())).collect::<Vec<_>>()),
        )
    } else {
        None
    };

    let results = cells
        .iter()
        .map(|&(est, kind)| {
            let spec = estimand_spec(est);
            let effect = match kind {
                EstimatorKind::AnnIpw => {
                    let ps = ann_ps.as_ref().expect("fitted above").as_ref().map_err(|e| e.clone());
                    ps.and_then(|ps| {
                        let infl = selected
                            .influence
                            .get(&est.label())
                            .ok_or_else(|| Error::InvalidConfig(format!("no settings for {}", est.label())))?;
                        ipw_with_propensity(sample, &spec, ps, &with_seed(infl, seed, 0x200), opts).map(|(e, _)| e)
                    })
                }
                EstimatorKind::AnnOr => {
                    let ps = ann_ps.as_ref().expect("fitted above").as_ref().map_err(|e| e.clone());
                    let preds = ann_or_preds.as_ref().expect("fitted above").as_ref().map_err(|e| e.clone());
                    ps.and_then(|ps| preds.and_then(|g| or_effect_from_predictions(sample, &spec, g, ps, opts)))
                }
                EstimatorKind::GlmIpw => glm_ipw(sample, &spec, opts),
                EstimatorKind::GlmOr => glm_or(sample, &spec, opts),
                EstimatorKind::Oracle => oracle_estimate(&draw, &spec, opts.alpha, opts.trim_floor),
            };
            effect.map(|e| CellResult::from_effect(&e)).map_err(|e| e.to_string())
        })
        .collect();
    ReplicationResult {
        replication: r,
        seed,
        cells: results,
    }
}

/// Metrics of one (estimand, estimator) cell across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub estimand: String,
    pub estimator: String,
    pub n: usize,
    pub p: usize,
    pub replications: usize,
    pub rate: Option<f64>,
    pub bias: Option<f64>,
    /// Absent with fewer than two successful replications.
    pub emp_sd: Option<f64>,
    pub est_sd: Option<f64>,
    pub truth: f64,
    pub truth_mc_se: f64,
    pub failures: usize,
    pub valid: bool,
    pub mean_trimmed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub truths: BTreeMap<String, TruthValue>,
    pub selected: Option<SelectedConfigs>,
    pub cells: Vec<CellSummary>,
    pub replications: Vec<ReplicationResult>,
    pub runtime_secs: f64,
}

impl SimReport {
    pub fn cell(&self, estimand: &str, estimator: EstimatorKind) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.estimand == estimand && c.estimator == estimator.label())
    }

    /// Every cell has at most 5% failed replications.
    pub fn is_valid(&self) -> bool {
        self.cells.iter().all(|c| c.valid)
    }

    pub fn failure_fraction(&self) -> f64 {
        let total: usize = self.cells.iter().map(|c| c.replications).sum();
        let failed: usize = self.cells.iter().map(|c| c.failures).sum();
        if total == 0 {
            0.0
        } else {
            failed as f64 / total as f64
        }
    }
}

fn summarize(
    config: &SimConfig,
    idx: usize,
    est: SimEstimand,
    kind: EstimatorKind,
    truth: TruthValue,
    reps: &[ReplicationResult],
) -> CellSummary {
    let ok: Vec<&CellResult> = reps.iter().filter_map(|r| r.cells[idx].as_ref().ok()).collect();
    let failures = reps.len() - ok.len();
    let m = ok.len() as f64;
    let mean = |f: &dyn Fn(&CellResult) -> f64| -> Option<f64> {
        if ok.is_empty() {
            None
        } else {
            Some(ok.iter().map(|c| f(c)).sum::<f64>() / m)
        }
    };
    let rate = mean(&|c| f64::from(u8::from(c.lower <= truth.value && truth.value <= c.upper)));
    let bias = mean(&|c| (c.estimate - truth.value).abs());
    let est_sd = mean(&|c| c.se);
    let mean_trimmed = mean(&|c| c.trimmed as f64);
    let emp_sd = if ok.len() >= 2 {
        let mu = ok.iter().map(|c| c.estimate).sum::<f64>() / m;
        Some((ok.iter().map(|c| (c.estimate - mu).powi(2)).sum::<f64>() / (m - 1.0)).sqrt())
    } else {
        None
    };
    CellSummary {
        estimand: est.label(),
        estimator: kind.label().to_string(),
        n: config.n,
        p: config.p,
        replications: reps.len(),
        rate,
        bias,
        emp_sd,
        est_sd,
        truth: truth.value,
        truth_mc_se: truth.mc_se,
        failures,
        valid: (failures as f64) <= MAX_FAILURE_FRACTION * reps.len() as f64,
        mean_trimmed,
    }
}

/// Runs all replications (in parallel, independently seeded) and aggregates in index order.
pub fn run_replications(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let start = Instant::now();
    let truths: BTreeMap<String, TruthValue> = config
        .estimands
        .iter()
        .map(|&e| (e.label(), true_effect_with(config.design, e, config.truth_draws, config.truth_seed)))
        .collect();

    let selected = match (&config.fixed_configs, config.cv_mode) {
        (Some(f), _) => Some(SelectedConfigs::fixed(f, config)),
        (None, CvMode::Pilot) => {
            let pilot_seed = mix(config.base_seed, PILOT_STREAM);
            let pilot = generate_design(config.design, config.n, config.p, pilot_seed)?;
            Some(select_configs(&pilot, config, mix(pilot_seed, 0xc5))?)
        }
        (None, CvMode::PerReplication) => None,
    };

    let reps: Vec<ReplicationResult> = (0..config.replications)
        .into_par_iter()
        .map(|r| run_replication(config, selected.as_ref(), r))
        .collect();

    let cells = config
        .cells()
        .into_iter()
        .enumerate()
        .map(|(idx, (est, kind))| summarize(config, idx, est, kind, truths[&est.label()], &reps))
        .collect();
    Ok(SimReport {
        config: config.clone(),
        truths,
        selected,
        cells,
        replications: reps,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
