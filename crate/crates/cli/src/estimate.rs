//! `teffect estimate`: nuisance fits, point estimates, intervals and test statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use teffect_core::ann::{CvOutcome, FittedNetwork, NetworkConfig};
use teffect_core::normal::two_sided_p_value;
use teffect_core::pipeline::{
    fit_outcome_networks, fit_propensity_set, ipw_with_propensity, or_effect_from_predictions, select_influence_configs,
    select_outcome_configs, select_propensity_configs, EffectEstimate, PipelineOptions,
};
use teffect_core::sim::seed::mix;
use teffect_core::{EstimandSpec, Sample};

use crate::config::{Command, EstimatorChoice, RunConfig};
use crate::error::CliError;
use crate::ingest::ingest_csv;
use crate::output::num;

/// Points per emitted curve.
pub const CURVE_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub level: usize,
    pub estimate: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
    pub h: f64,
    pub trimmed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub estimand: String,
    pub estimator: String,
    pub estimate: f64,
    pub est_sd: f64,
    pub z_value: f64,
    pub p_value: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub components: Vec<Component>,
}

/// A chosen network setting and its cross-validated loss (absent for fixed settings).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub config: NetworkConfig,
    pub cv_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub propensity: Vec<Choice>,
    pub influence: BTreeMap<String, Vec<Choice>>,
    pub outcome: Vec<Choice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDocument {
    pub config: RunConfig,
    pub n: usize,
    pub p: usize,
    pub levels: usize,
    pub results: Vec<EstimateRow>,
    pub selected: Selected,
}

/// `z = estimate / se` and its two-sided normal p-value.
pub fn z_and_p(estimate: f64, se: f64) -> (f64, f64) {
    let z = estimate / se;
    (z, two_sided_p_value(z))
}

fn row(name: &str, estimator: &str, e: &EffectEstimate) -> EstimateRow {
    let iv = e.headline();
    let (z, p) = z_and_p(iv.estimate, iv.se);
    let components = e
        .covariance
        .components
        .iter()
        .enumerate()
        .map(|(d, c)| Component {
            level: d,
            estimate: c.estimate,
            se: c.se,
            lower: c.lower,
            upper: c.upper,
            h: e.influence.h_hat[d].value,
            trimmed: e.point.trimmed.get(d).copied().unwrap_or(0),
        })
        .collect();
    EstimateRow {
        estimand: name.to_string(),
        estimator: estimator.to_string(),
        estimate: iv.estimate,
        est_sd: iv.se,
        z_value: z,
        p_value: p,
        ci_lower: iv.lower,
        ci_upper: iv.upper,
        alpha: e.covariance.alpha,
        components,
    }
}

fn chosen(v: &[CvOutcome]) -> Vec<Choice> {
    v.iter()
        .map(|c| Choice {
            config: c.best.clone(),
            cv_loss: Some(c.best_loss),
        })
        .collect()
}

fn fixed(c: &NetworkConfig, k: usize) -> Vec<Choice> {
    vec![
        Choice {
            config: c.clone(),
            cv_loss: None,
        };
        k
    ]
}

fn configs(v: &[Choice]) -> Vec<NetworkConfig> {
    v.iter().map(|c| c.config.clone()).collect()
}

/// Each network gets its own seed stream derived from the run seed.
fn reseed(v: &[Choice], seed: u64, slot: u64) -> Vec<Choice> {
    v.iter()
        .enumerate()
        .map(|(k, c)| Choice {
            config: NetworkConfig {
                seed: mix(seed, slot + k as u64),
                ..c.config.clone()
            },
            cv_loss: c.cv_loss,
        })
        .collect()
}

/// Result document plus the outcome networks when they were fitted.
pub struct EstimateRun {
    pub document: EstimateDocument,
    pub outcome_networks: Vec<FittedNetwork>,
}

/// Reads the data file named by the config and estimates every requested effect.
pub fn cmd_estimate(config: &RunConfig) -> anyhow::Result<EstimateRun> {
    config.check(Command::Estimate)?;
    let path = config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("estimate needs --data or a \"data\" entry in the config".into()))?;
    let sample = ingest_csv(path, &config.columns)?;
    estimate_sample(&sample, config)
}

pub fn estimate_sample(sample: &Sample, config: &RunConfig) -> anyhow::Result<EstimateRun> {
    config.check(Command::Estimate)?;
    let levels = sample.levels();
    let specs: Vec<(String, EstimandSpec, bool)> = config
        .estimands
        .iter()
        .map(|e| Ok((e.name(), e.to_spec(levels)?, e.is_squared())))
        .collect::<Result<_, CliError>>()?;
    for (name, spec, _) in &specs {
        spec.check(levels).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
    }
    if config.estimator == EstimatorChoice::Or {
        if let Some((name, _, _)) = specs.iter().find(|s| !s.2) {
            return Err(CliError::Config(format!("{name}: the outcome-regression estimator needs squared loss")).into());
        }
    }
    let want_or = config.estimator != EstimatorChoice::Ipw;
    let want_outcome = want_or || config.emit_curves.is_some();
    let opts = PipelineOptions {
        trim_floor: config.trim,
        alpha: config.alpha,
        ..PipelineOptions::default()
    };
    let grid = config.cv_grid();
    grid.validate()?;

    let mut selected = Selected::default();
    let prop = match &config.networks {
        Some(f) => fixed(&f.propensity, if levels == 2 { 1 } else { levels }),
        None => chosen(&select_propensity_configs(sample, &grid)?),
    };
    selected.propensity = reseed(&prop, config.seed, 0x100);
    let (ps, _) = fit_propensity_set(sample, &configs(&selected.propensity), config.trim)?;

    let mut outcome_networks = Vec::new();
    let mut preds = Vec::new();
    if want_outcome {
        let out = match &config.networks {
            Some(f) => fixed(f.outcome.as_ref().unwrap_or(&f.influence), levels),
            None => chosen(&select_outcome_configs(sample, &grid)?),
        };
        selected.outcome = reseed(&out, config.seed, 0x300);
        outcome_networks = fit_outcome_networks(sample, &configs(&selected.outcome))?;
        preds = outcome_networks.iter().map(|g| g.predict_rows(sample.covariates())).collect();
    }

    let mut results = Vec::new();
    for (name, spec, squared) in &specs {
        if config.estimator != EstimatorChoice::Or {
            let infl = match &config.networks {
                Some(f) => fixed(&f.influence, levels),
                None => chosen(&select_influence_configs(sample, spec, &ps, &grid)?),
            };
            let infl = reseed(&infl, config.seed, 0x200);
            let (est, _) = ipw_with_propensity(sample, spec, &ps, &configs(&infl), &opts)?;
            results.push(row(name, "ANN-IPW", &est));
            selected.influence.insert(name.clone(), infl);
        }
        if want_or && *squared {
            let est = or_effect_from_predictions(sample, spec, &preds, &ps, &opts)?;
            results.push(row(name, "ANN-OR", &est));
        }
    }
    Ok(EstimateRun {
        document: EstimateDocument {
            config: config.clone(),
            n: sample.n(),
            p: sample.p(),
            levels,
            results,
            selected,
        },
        outcome_networks,
    })
}

pub const RESULT_HEADER: &str = "estimand,estimator,estimate,est_sd,z_value,p_value,ci_lower,ci_upper,alpha,trimmed";

pub fn results_csv(rows: &[EstimateRow]) -> String {
    let mut s = String::from(RESULT_HEADER);
    s.push('\n');
    for r in rows {
        let trimmed: Vec<String> = r.components.iter().map(|c| c.trimmed.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.estimand,
            r.estimator,
            num(r.estimate),
            num(r.est_sd),
            num(r.z_value),
            num(r.p_value),
            num(r.ci_lower),
            num(r.ci_upper),
            num(r.alpha),
            trimmed.join(";")
        );
    }
    s
}

pub fn results_table(doc: &EstimateDocument) -> String {
    let mut s = format!("n = {}, p = {}, levels = {}\n", doc.n, doc.p, doc.levels);
    let _ = writeln!(
        s,
        "{:<14} {:<8} {:>10} {:>10} {:>9} {:>9} {:>23}",
        "estimand", "method", "estimate", "est_sd", "z", "p", "interval"
    );
    for r in &doc.results {
        let _ = writeln!(
            s,
            "{:<14} {:<8} {:>10.4} {:>10.4} {:>9.3} {:>9.4} [{:>9.4}, {:>9.4}]",
            r.estimand, r.estimator, r.estimate, r.est_sd, r.z_value, r.p_value, r.ci_lower, r.ci_upper
        );
    }
    s
}

/// Fitted arm means along covariate `k` from its minimum to maximum, the other covariates
/// held at their sample means.
pub fn curves_csv(sample: &Sample, nets: &[FittedNetwork], k: usize) -> anyhow::Result<String> {
    let p = sample.p();
    if k >= p {
        return Err(CliError::Config(format!("curve covariate {k} out of range for p = {p}")).into());
    }
    let n = sample.n() as f64;
    let mut base = vec![0.0; p];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..sample.n() {
        let x = sample.x(i);
        for (b, v) in base.iter_mut().zip(x) {
            *b += v / n;
        }
        lo = lo.min(x[k]);
        hi = hi.max(x[k]);
    }
    let mut s = String::from("x");
    for d in 0..nets.len() {
        let _ = write!(s, ",g_{d}");
    }
    s.push('\n');
    for j in 0..CURVE_POINTS {
        let mut x = base.clone();
        x[k] = lo + (hi - lo) * j as f64 / (CURVE_POINTS - 1) as f64;
        s.push_str(&num(x[k]));
        for g in nets {
            let _ = write!(s, ",{}", num(g.predict_rows(&x)[0]));
        }
        s.push('\n');
    }
    Ok(s)
}
