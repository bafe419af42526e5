//! Point estimators: weighted M-estimation (IPW), outcome regression, treated subgroup.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::ann::FittedNetwork;
use crate::error::{Error, Result};
use crate::estimand::EstimandSpec;
use crate::loss::{LossFamily, LossSpec};
use crate::sample::Sample;

pub const DEFAULT_TRIM_FLOOR: f64 = 1e-3;
const EXPECTILE_TOL: f64 = 1e-10;
const EXPECTILE_MAX_ITER: usize = 200;

/// Estimated `pi_d(X_i)` for every level and row, plus the floor used in weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensitySet {
    /// `scores[d][i]`.
    pub scores: Vec<Vec<f64>>,
    pub floor: f64,
}

impl PropensitySet {
    pub fn from_scores(scores: Vec<Vec<f64>>, floor: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&floor) {
            return Err(Error::InvalidConfig(format!("trimming floor {floor} not in [0, 0.5)")));
        }
        let n = scores.first().map(Vec::len).unwrap_or(0);
        for s in &scores {
            if s.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: s.len(),
                });
            }
            if s.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::InvalidConfig("propensity scores must lie in (0, 1)".into()));
            }
        }
        Ok(Self { scores, floor })
    }

    /// Evaluates one logit network per level on the sample's rows.
    pub fn from_networks(sample: &Sample, nets: &[FittedNetwork], floor: f64) -> Result<Self> {
        let scores = nets.iter().map(|net| net.predict_rows(sample.covariates())).collect();
        Self::from_scores(scores, floor)
    }

    /// Two-arm set from the level-1 score, using `pi_0 = 1 - pi_1`.
    pub fn binary(pi1: Vec<f64>, floor: f64) -> Result<Self> {
        let pi0 = pi1.iter().map(|p| 1.0 - p).collect();
        Self::from_scores(vec![pi0, pi1], floor)
    }

    pub fn levels(&self) -> usize {
        self.scores.len()
    }

    pub fn n(&self) -> usize {
        self.scores.first().map(Vec::len).unwrap_or(0)
    }

    /// `max(pi_d(X_i), floor)`.
    #[inline]
    pub fn trimmed(&self, d: usize, i: usize) -> f64 {
        self.scores[d][i].max(self.floor)
    }

    pub fn trimmed_count(&self, d: usize) -> usize {
        self.scores[d].iter().filter(|&&p| p < self.floor).count()
    }

    fn check(&self, sample: &Sample) -> Result<()> {
        if self.levels() != sample.levels() {
            return Err(Error::DimensionMismatch {
                expected: sample.levels(),
                actual: self.levels(),
            });
        }
        if self.n() != sample.n() {
            return Err(Error::DimensionMismatch {
                expected: sample.n(),
                actual: self.n(),
            });
        }
        Ok(())
    }

    /// `D_{di} / max(pi_d(X_i), floor)`.
    pub fn ipw_weights(&self, sample: &Sample, d: usize) -> Vec<f64> {
        (0..sample.n())
            .map(|i| {
                if sample.treatments()[i] == d {
                    1.0 / self.trimmed(d, i)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `D_{di} pi_{d'}(X_i) / max(pi_d(X_i), floor)`, with plain `D_{d'i}` on the `d = d'` arm.
    pub fn treated_weights(&self, sample: &Sample, d: usize, d_prime: usize) -> Vec<f64> {
        (0..sample.n())
            .map(|i| {
                if sample.treatments()[i] != d {
                    0.0
                } else if d == d_prime {
                    1.0
                } else {
                    self.scores[d_prime][i] / self.trimmed(d, i)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub beta_hat: Vec<f64>,
    pub estimand: EstimandSpec,
    /// `n^{-1} sum_i w_i L'(Y_i - beta_hat_d)` per level.
    pub foc_residuals: Vec<f64>,
    /// `scale * max_i w_i / n` per level; bounds the check-loss residual.
    pub foc_jump_bound: Vec<f64>,
    /// Rows whose score fell below the trimming floor, per level.
    pub trimmed: Vec<usize>,
}

impl PointEstimate {
    pub fn contrast(&self, a: &[f64]) -> Result<f64> {
        contrast_point(self, a)
    }
}

/// Exact minimizer of `sum_i w_i L(y_i - b)` for the three loss families.
pub fn weighted_m_estimate(values: &[f64], weights: &[f64], loss: &LossSpec) -> Result<f64> {
    match loss.family {
        LossFamily::Squared => weighted_mean(values, weights),
        LossFamily::Check { tau } => weighted_quantile(values, weights, tau),
        LossFamily::AsymmetricSquared { tau } => weighted_expectile(values, weights, tau),
    }
}

fn weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroWeights);
    }
    Ok(values.iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / total)
}

/// Smallest sorted value whose normalized cumulative weight reaches `tau`; the lower end of
/// the weighted check-loss minimizer set.
pub fn weighted_quantile(values: &[f64], weights: &[f64], tau: f64) -> Result<f64> {
    assert_eq!(values.len(), weights.len(), "values/weights length");
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let mut order: Vec<usize> = (0..values.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let target = tau * total * (1.0 - 1e-12);
    let mut cumulative = 0.0;
    for &i in &order {
        cumulative += weights[i];
        if cumulative >= target {
            return Ok(values[i]);
        }
    }
    Ok(values[*order.last().expect("positive weight exists")])
}

/// Root of `sum_i w_i |tau - I(y_i <= b)| (y_i - b) = 0` by reweighted-mean iteration.
pub fn weighted_expectile(values: &[f64], weights: &[f64], tau: f64) -> Result<f64> {
    assert_eq!(values.len(), weights.len(), "values/weights length");
    let mut beta = weighted_mean(values, weights)?;
    for _ in 0..EXPECTILE_MAX_ITER {
        let (mut num, mut den) = (0.0, 0.0);
        for (&y, &w) in values.iter().zip(weights) {
            let k = w * if y <= beta { 1.0 - tau } else { tau };
            num += k * y;
            den += k;
        }
        let next = num / den;
        if (next - beta).abs() <= EXPECTILE_TOL {
            return Ok(next);
        }
        beta = next;
    }
    Err(Error::NoConvergence {
        what: "expectile iteration",
        iterations: EXPECTILE_MAX_ITER,
    })
}

fn fit_level(
    sample: &Sample,
    loss: &LossSpec,
    weights: &[f64],
    level: usize,
) -> Result<(f64, f64, f64)> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights(level));
    }
    let y = sample.outcomes();
    let beta = weighted_m_estimate(y, weights, loss)?;
    let n = sample.n() as f64;
    let foc = y
        .iter()
        .zip(weights)
        .map(|(yi, w)| w * loss.grad(yi - beta))
        .sum::<f64>()
        / n;
    // L' jumps by `scale` at a data point; one row moves the residual by at most scale * w / n
    let jump = loss.scale * weights.iter().fold(0.0f64, |m, &w| m.max(w)) / n;
    Ok((beta, foc, jump))
}

fn assemble(
    sample: &Sample,
    estimand: EstimandSpec,
    ps: Option<&PropensitySet>,
    weights: impl Fn(usize) -> Vec<f64>,
) -> Result<PointEstimate> {
    let levels = sample.levels();
    let mut beta_hat = Vec::with_capacity(levels);
    let mut foc = Vec::with_capacity(levels);
    let mut jump = Vec::with_capacity(levels);
    for d in 0..levels {
        let (b, f, j) = fit_level(sample, &estimand.loss, &weights(d), d)?;
        beta_hat.push(b);
        foc.push(f);
        jump.push(j);
    }
    let trimmed = match ps {
        Some(ps) => (0..levels).map(|d| ps.trimmed_count(d)).collect(),
        None => vec![0; levels],
    };
    Ok(PointEstimate {
        beta_hat,
        estimand,
        foc_residuals: foc,
        foc_jump_bound: jump,
        trimmed,
    })
}

/// Inverse-probability-weighted M-estimate of every level's loss-defined functional.
pub fn estimate_ipw(sample: &Sample, loss: &LossSpec, ps: &PropensitySet) -> Result<PointEstimate> {
    ps.check(sample)?;
    let estimand = EstimandSpec::population(*loss);
    assemble(sample, estimand, Some(ps), |d| ps.ipw_weights(sample, d))
}

/// Treated-subgroup estimate for `D = d'`.
pub fn estimate_att(
    sample: &Sample,
    loss: &LossSpec,
    ps: &PropensitySet,
    d_prime: usize,
) -> Result<PointEstimate> {
    ps.check(sample)?;
    if d_prime >= sample.levels() || sample.arm_count(d_prime) == 0 {
        return Err(Error::EmptyArm(d_prime));
    }
    let estimand = EstimandSpec::treated(*loss, d_prime);
    assemble(sample, estimand, Some(ps), |d| ps.treated_weights(sample, d, d_prime))
}

/// Unnormalized squared-loss treated-subgroup estimate `sum_i w_i Y_i / sum_i D_{d'i}`.
///
/// Differs from the argmin in [`estimate_att`] only through `sum_i w_i != n_{d'}`.
pub fn estimate_att_unnormalized(sample: &Sample, ps: &PropensitySet, d_prime: usize) -> Result<Vec<f64>> {
    ps.check(sample)?;
    let n_treated = sample.arm_count(d_prime);
    if n_treated == 0 {
        return Err(Error::EmptyArm(d_prime));
    }
    Ok((0..sample.levels())
        .map(|d| {
            let w = ps.treated_weights(sample, d, d_prime);
            w.iter().zip(sample.outcomes()).map(|(w, y)| w * y).sum::<f64>() / n_treated as f64
        })
        .collect())
}

/// Outcome-regression estimate: the full-sample average of each level's fitted regression.
pub fn estimate_or_ate(sample: &Sample, regs: &[FittedNetwork]) -> Result<PointEstimate> {
    let preds: Vec<Vec<f64>> = regs.iter().map(|g| g.predict_rows(sample.covariates())).collect();
    estimate_or_from_predictions(sample, &preds, None)
}

/// Outcome-regression estimate from per-level predictions `preds[d][i]`, averaged over all
/// rows or, for a treated subgroup, over the rows with `D = d'`.
pub fn estimate_or_from_predictions(
    sample: &Sample,
    preds: &[Vec<f64>],
    d_prime: Option<usize>,
) -> Result<PointEstimate> {
    if preds.len() != sample.levels() {
        return Err(Error::DimensionMismatch {
            expected: sample.levels(),
            actual: preds.len(),
        });
    }
    let rows: Vec<usize> = match d_prime {
        None => (0..sample.n()).collect(),
        Some(dp) => sample.arm_indices(dp),
    };
    if rows.is_empty() {
        return Err(Error::EmptyArm(d_prime.unwrap_or(0)));
    }
    let beta_hat = preds
        .iter()
        .map(|g| rows.iter().map(|&i| g[i]).sum::<f64>() / rows.len() as f64)
        .collect();
    let levels = sample.levels();
    let estimand = match d_prime {
        None => EstimandSpec::population(LossSpec::squared()),
        Some(dp) => EstimandSpec::treated(LossSpec::squared(), dp),
    };
    Ok(PointEstimate {
        beta_hat,
        estimand,
        foc_residuals: vec![0.0; levels],
        foc_jump_bound: vec![0.0; levels],
        trimmed: vec![0; levels],
    })
}

/// `a^T beta_hat`.
pub fn contrast_point(est: &PointEstimate, a: &[f64]) -> Result<f64> {
    if a.len() != est.beta_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: est.beta_hat.len(),
            actual: a.len(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("contrast has non-finite entries".into()));
    }
    Ok(a.iter().zip(&est.beta_hat).map(|(a, b)| a * b).sum())
}
