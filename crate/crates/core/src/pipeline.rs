//! End-to-end estimation: nuisance fits, point estimate, influence values, intervals.

use serde::{Deserialize, Serialize};

use crate::ann::{cv_select, cv_select_with_targets, train_propensity, train_regression, CvGrid, CvOutcome, FittedNetwork, NetworkConfig, Objective};
use crate::error::{Error, Result};
use crate::estimand::{EffectKind, EstimandSpec};
use crate::estimators::{estimate_att, estimate_att_unnormalized, estimate_ipw, estimate_or_from_predictions, PointEstimate, PropensitySet, DEFAULT_TRIM_FLOOR};
use crate::loss::LossFamily;
use crate::sample::Sample;
use crate::variance::{
    analytic_h, confidence_intervals, derivative_targets, estimate_h, estimate_h_treated, estimate_s, estimate_s_treated,
    fit_sieve_density, CovarianceEstimate, HEstimate, InfluenceComponents, Interval, SieveBasis,
};

/// Denominator convention for the squared-loss treated-subgroup estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttNormalization {
    /// Exact argmin of the weighted loss (weights sum to one within each level).
    #[default]
    SelfNormalized,
    /// `sum_i w_i Y_i / n_{d'}` (squared loss only).
    HorvitzThompson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub trim_floor: f64,
    pub alpha: f64,
    pub sieve_basis: SieveBasis,
    /// Also fit the sieve for squared loss and report its gap to the analytic `H`.
    pub sieve_diagnostic: bool,
    pub att_normalization: AttNormalization,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            trim_floor: DEFAULT_TRIM_FLOOR,
            alpha: 0.05,
            sieve_basis: SieveBasis::default(),
            sieve_diagnostic: true,
            att_normalization: AttNormalization::SelfNormalized,
        }
    }
}

/// Network settings per nuisance. A single propensity config on a two-level sample fits
/// `pi_1` only and sets `pi_0 = 1 - pi_1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnConfigs {
    pub propensity: Vec<NetworkConfig>,
    /// Regression of `L'(Y - beta_d)` per level.
    pub influence: Vec<NetworkConfig>,
    /// Outcome regression per level (empty unless the OR estimator is requested).
    #[serde(default)]
    pub outcome: Vec<NetworkConfig>,
}

impl AnnConfigs {
    /// Every config with its seed replaced by `mix(seed, slot)`.
    pub fn reseeded(&self, seed: u64) -> Self {
        let re = |v: &[NetworkConfig], base: u64| -> Vec<NetworkConfig> {
            v.iter()
                .enumerate()
                .map(|(k, c)| NetworkConfig {
                    seed: crate::sim::seed::mix(seed, base + k as u64),
                    ..c.clone()
                })
                .collect()
        };
        Self {
            propensity: re(&self.propensity, 0x100),
            influence: re(&self.influence, 0x200),
            outcome: re(&self.outcome, 0x300),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub propensity: Vec<CvOutcome>,
    pub influence: Vec<CvOutcome>,
    pub outcome: Vec<CvOutcome>,
}

#[derive(Debug, Clone, Default)]
pub struct FittedNuisances {
    pub propensity: Vec<FittedNetwork>,
    pub influence: Vec<FittedNetwork>,
    pub outcome: Vec<FittedNetwork>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub point: PointEstimate,
    pub influence: InfluenceComponents,
    pub covariance: CovarianceEstimate,
    /// Unnormalized treated-subgroup values, when requested for squared loss.
    pub horvitz_thompson: Option<Vec<f64>>,
}

impl EffectEstimate {
    pub fn beta_hat(&self) -> &[f64] {
        &self.point.beta_hat
    }

    pub fn v_hat(&self) -> &[Vec<f64>] {
        &self.covariance.v_hat
    }

    /// Contrast interval when a contrast was requested, else the last component's.
    pub fn headline(&self) -> Interval {
        self.covariance
            .contrast
            .unwrap_or_else(|| *self.covariance.components.last().expect("at least one level"))
    }
}

fn levels_check(sample: &Sample, n_cfg: usize, what: &str) -> Result<()> {
    if n_cfg != sample.levels() {
        return Err(Error::InvalidConfig(format!(
            "{what}: {} configs for {} treatment levels",
            n_cfg,
            sample.levels()
        )));
    }
    Ok(())
}

/// Fits the propensity networks and returns their trimmed score set.
pub fn fit_propensity_set(
    sample: &Sample,
    configs: &[NetworkConfig],
    floor: f64,
) -> Result<(PropensitySet, Vec<FittedNetwork>)> {
    if configs.len() == 1 && sample.levels() == 2 {
        let net = train_propensity(sample, 1, &configs[0])?;
        let pi1 = net.predict_rows(sample.covariates());
        return Ok((PropensitySet::binary(pi1, floor)?, vec![net]));
    }
    levels_check(sample, configs.len(), "propensity")?;
    let nets = configs
        .iter()
        .enumerate()
        .map(|(d, c)| train_propensity(sample, d, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((PropensitySet::from_networks(sample, &nets, floor)?, nets))
}

/// Weighted M-estimate for the estimand's kind.
pub fn point_estimate(sample: &Sample, estimand: &EstimandSpec, ps: &PropensitySet) -> Result<PointEstimate> {
    let mut point = match estimand.kind {
        EffectKind::Population => estimate_ipw(sample, &estimand.loss, ps)?,
        EffectKind::TreatedSubgroup(dp) => estimate_att(sample, &estimand.loss, ps, dp)?,
    };
    point.estimand = estimand.clone();
    Ok(point)
}

/// `H_d` for every level: analytic for squared loss (sieve as diagnostic), sieve otherwise.
pub fn h_values(
    sample: &Sample,
    point: &PointEstimate,
    ps: &PropensitySet,
    opts: &PipelineOptions,
) -> Result<Vec<HEstimate>> {
    let loss = &point.estimand.loss;
    (0..sample.levels())
        .map(|d| {
            if let Some(a) = analytic_h(loss) {
                if !opts.sieve_diagnostic {
                    return Ok(HEstimate {
                        value: a,
                        sieve: f64::NAN,
                        analytic: Some(a),
                        relative_gap: None,
                    });
                }
            }
            let density = fit_sieve_density(sample, d, &opts.sieve_basis)?;
            match point.estimand.kind {
                EffectKind::Population => estimate_h(sample, d, point.beta_hat[d], loss, &density, ps),
                EffectKind::TreatedSubgroup(dp) => {
                    estimate_h_treated(sample, d, dp, point.beta_hat[d], loss, &density, ps)
                }
            }
        })
        .collect()
}

/// Influence values, covariance and intervals from a point estimate and its nuisances.
pub fn plug_in_effect(
    sample: &Sample,
    point: PointEstimate,
    ps: &PropensitySet,
    h_hat: Vec<HEstimate>,
    e_hat: Vec<Vec<f64>>,
    alpha: f64,
) -> Result<EffectEstimate> {
    let loss = point.estimand.loss;
    let s_hat = (0..sample.levels())
        .map(|d| match point.estimand.kind {
            EffectKind::Population => estimate_s(sample, d, point.beta_hat[d], &loss, ps, &e_hat[d]),
            EffectKind::TreatedSubgroup(dp) => {
                estimate_s_treated(sample, d, dp, point.beta_hat[d], &loss, ps, &e_hat[d])
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let influence = InfluenceComponents { h_hat, e_hat, s_hat };
    let covariance = confidence_intervals(
        &point.beta_hat,
        &influence.h_values(),
        &influence.s_hat,
        alpha,
        point.estimand.contrast.as_deref(),
    )?;
    Ok(EffectEstimate {
        point,
        influence,
        covariance,
        horvitz_thompson: None,
    })
}

/// Network IPW estimate with fixed configurations.
pub fn ann_ipw(
    sample: &Sample,
    estimand: &EstimandSpec,
    configs: &AnnConfigs,
    opts: &PipelineOptions,
) -> Result<(EffectEstimate, FittedNuisances)> {
    let (ps, prop_nets) = fit_propensity_set(sample, &configs.propensity, opts.trim_floor)?;
    let (est, e_nets) = ipw_with_propensity(sample, estimand, &ps, &configs.influence, opts)?;
    Ok((
        est,
        FittedNuisances {
            propensity: prop_nets,
            influence: e_nets,
            outcome: Vec::new(),
        },
    ))
}

/// IPW estimate and network `E_d` fits given already-estimated scores.
pub fn ipw_with_propensity(
    sample: &Sample,
    estimand: &EstimandSpec,
    ps: &PropensitySet,
    influence: &[NetworkConfig],
    opts: &PipelineOptions,
) -> Result<(EffectEstimate, Vec<FittedNetwork>)> {
    estimand.check(sample.levels())?;
    levels_check(sample, influence.len(), "influence regression")?;
    let point = point_estimate(sample, estimand, ps)?;
    let h = h_values(sample, &point, ps, opts)?;
    let mut e_nets = Vec::with_capacity(sample.levels());
    let mut e_hat = Vec::with_capacity(sample.levels());
    for d in 0..sample.levels() {
        let targets = derivative_targets(sample, point.beta_hat[d], &estimand.loss);
        let net = train_regression(sample, d, &targets, &influence[d])?;
        e_hat.push(net.predict_rows(sample.covariates()));
        e_nets.push(net);
    }
    let ht = treated_ht(sample, estimand, ps, opts)?;
    let mut est = plug_in_effect(sample, point, ps, h, e_hat, opts.alpha)?;
    est.horvitz_thompson = ht;
    Ok((est, e_nets))
}

fn treated_ht(
    sample: &Sample,
    estimand: &EstimandSpec,
    ps: &PropensitySet,
    opts: &PipelineOptions,
) -> Result<Option<Vec<f64>>> {
    match (estimand.kind, estimand.loss.family, opts.att_normalization) {
        (EffectKind::TreatedSubgroup(dp), LossFamily::Squared, AttNormalization::HorvitzThompson) => {
            Ok(Some(estimate_att_unnormalized(sample, ps, dp)?))
        }
        _ => Ok(None),
    }
}

/// Outcome-regression estimate for squared loss; the variance reuses the IPW plug-in with
/// `E_d = L'(g_d - beta_d)`, that is `2c (g_d - beta_d)`.
pub fn or_effect_from_predictions(
    sample: &Sample,
    estimand: &EstimandSpec,
    preds: &[Vec<f64>],
    ps: &PropensitySet,
    opts: &PipelineOptions,
) -> Result<EffectEstimate> {
    if !matches!(estimand.loss.family, LossFamily::Squared) {
        return Err(Error::InvalidConfig("the outcome-regression estimator is defined for squared loss only".into()));
    }
    estimand.check(sample.levels())?;
    let d_prime = match estimand.kind {
        EffectKind::Population => None,
        EffectKind::TreatedSubgroup(dp) => Some(dp),
    };
    let mut point = estimate_or_from_predictions(sample, preds, d_prime)?;
    point.estimand = estimand.clone();
    point.trimmed = (0..sample.levels()).map(|d| ps.trimmed_count(d)).collect();
    let loss = estimand.loss;
    let e_hat = preds
        .iter()
        .zip(&point.beta_hat)
        .map(|(g, b)| g.iter().map(|gi| loss.grad(gi - b)).collect())
        .collect();
    let h = h_values(sample, &point, ps, opts)?;
    plug_in_effect(sample, point, ps, h, e_hat, opts.alpha)
}

/// Network outcome-regression estimate with fixed configurations.
pub fn ann_or(
    sample: &Sample,
    estimand: &EstimandSpec,
    configs: &AnnConfigs,
    opts: &PipelineOptions,
) -> Result<(EffectEstimate, FittedNuisances)> {
    let (ps, prop_nets) = fit_propensity_set(sample, &configs.propensity, opts.trim_floor)?;
    let nets = fit_outcome_networks(sample, &configs.outcome)?;
    let preds: Vec<Vec<f64>> = nets.iter().map(|g| g.predict_rows(sample.covariates())).collect();
    let est = or_effect_from_predictions(sample, estimand, &preds, &ps, opts)?;
    Ok((
        est,
        FittedNuisances {
            propensity: prop_nets,
            influence: Vec::new(),
            outcome: nets,
        },
    ))
}

/// Per-arm networks for `E[Y | X, D = d]`.
pub fn fit_outcome_networks(sample: &Sample, configs: &[NetworkConfig]) -> Result<Vec<FittedNetwork>> {
    levels_check(sample, configs.len(), "outcome regression")?;
    let y = sample.outcomes().to_vec();
    configs
        .iter()
        .enumerate()
        .map(|(d, c)| train_regression(sample, d, &y, c))
        .collect()
}

/// Cross-validated propensity settings (level 1 only on a two-level sample).
pub fn select_propensity_configs(sample: &Sample, grid: &CvGrid) -> Result<Vec<CvOutcome>> {
    let levels: Vec<usize> = if sample.levels() == 2 { vec![1] } else { (0..sample.levels()).collect() };
    levels.iter().map(|&d| cv_select(sample, d, grid, Objective::Bernoulli)).collect()
}

/// Cross-validated `E_d` settings against targets `L'(Y - beta_hat_d)` at the IPW estimate.
pub fn select_influence_configs(
    sample: &Sample,
    estimand: &EstimandSpec,
    ps: &PropensitySet,
    grid: &CvGrid,
) -> Result<Vec<CvOutcome>> {
    let point = point_estimate(sample, estimand, ps)?;
    (0..sample.levels())
        .map(|d| {
            let t = derivative_targets(sample, point.beta_hat[d], &estimand.loss);
            cv_select_with_targets(sample, d, &t, grid, Objective::SquaredError)
        })
        .collect()
}

pub fn select_outcome_configs(sample: &Sample, grid: &CvGrid) -> Result<Vec<CvOutcome>> {
    (0..sample.levels())
        .map(|d| cv_select(sample, d, grid, Objective::SquaredError))
        .collect()
}

fn best(v: &[CvOutcome]) -> Vec<NetworkConfig> {
    v.iter().map(|c| c.best.clone()).collect()
}

/// Cross-validated network settings for one estimand: propensity first, then the `E_d`
/// regressions at the resulting IPW estimate, then (optionally) the outcome regressions.
pub fn select_ann_configs(
    sample: &Sample,
    estimand: &EstimandSpec,
    grid: &CvGrid,
    with_outcome: bool,
    opts: &PipelineOptions,
) -> Result<(AnnConfigs, CvSummary)> {
    estimand.check(sample.levels())?;
    let prop_cv = select_propensity_configs(sample, grid)?;
    let (ps, _) = fit_propensity_set(sample, &best(&prop_cv), opts.trim_floor)?;
    let infl_cv = select_influence_configs(sample, estimand, &ps, grid)?;
    let out_cv = if with_outcome { select_outcome_configs(sample, grid)? } else { Vec::new() };
    let configs = AnnConfigs {
        propensity: best(&prop_cv),
        influence: best(&infl_cv),
        outcome: best(&out_cv),
    };
    Ok((
        configs,
        CvSummary {
            propensity: prop_cv,
            influence: infl_cv,
            outcome: out_cv,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossSpec;
    use crate::sim::dgp::generate_dgp;

    fn quick() -> NetworkConfig {
        NetworkConfig {
            widths: vec![8],
            epochs: 30,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn ann_ipw_runs_end_to_end() {
        let draw = generate_dgp(600, 5, 1).unwrap();
        let est = EstimandSpec::population(LossSpec::squared()).with_difference(2);
        let cfg = AnnConfigs {
            propensity: vec![quick()],
            influence: vec![quick(), quick()],
            outcome: vec![],
        };
        let (e, nets) = ann_ipw(&draw.sample, &est, &cfg, &PipelineOptions::default()).unwrap();
        assert_eq!(nets.propensity.len(), 1);
        let iv = e.headline();
        assert!(iv.lower < iv.upper && iv.covers(iv.estimate));
        assert!((iv.estimate - 2.0).abs() < 1.0);
        assert_eq!(e.influence.h_hat[0].analytic, Some(2.0));
        assert!(e.influence.h_hat[0].relative_gap.unwrap() < 0.5);
    }

    #[test]
    fn reseeding_changes_only_seeds() {
        let cfg = AnnConfigs {
            propensity: vec![quick()],
            influence: vec![quick(), quick()],
            outcome: vec![],
        };
        let r = cfg.reseeded(5);
        assert_ne!(r.influence[0].seed, r.influence[1].seed);
        assert_eq!(r.influence[0].widths, cfg.influence[0].widths);
        assert_eq!(r, cfg.reseeded(5));
    }
}
