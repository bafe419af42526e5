//! Main-effects parametric baselines: logistic propensity by IRLS, linear regressions by OLS.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ann::network::logistic;
use crate::error::{Error, Result};
use crate::estimand::EstimandSpec;
use crate::estimators::PropensitySet;
use crate::pipeline::{h_values, or_effect_from_predictions, plug_in_effect, point_estimate, EffectEstimate, PipelineOptions};
use crate::sample::Sample;
use crate::variance::derivative_targets;

pub const IRLS_MAX_ITER: usize = 100;
const IRLS_GRAD_TOL: f64 = 1e-8;
/// Standardized-scale coefficient size treated as separation.
const SEPARATION_COEF: f64 = 50.0;
const SEPARATION_RESIDUAL: f64 = 1e-6;

/// Linear index `b0 + sum_k b_k x_k` on raw covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    pub fn index(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict_rows(&self, rows: &[f64]) -> Vec<f64> {
        rows.chunks_exact(self.coef.len()).map(|x| self.index(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub model: LinearModel,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl LogisticFit {
    pub fn predict_rows(&self, rows: &[f64]) -> Vec<f64> {
        self.model.predict_rows(rows).into_iter().map(logistic).collect()
    }
}

fn standardized_design(rows: &[f64], p: usize) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let n = rows.len() / p;
    let mut mean = vec![0.0; p];
    let mut sd = vec![0.0; p];
    for x in rows.chunks_exact(p) {
        for k in 0..p {
            mean[k] += x[k] / n as f64;
        }
    }
    for x in rows.chunks_exact(p) {
        for k in 0..p {
            sd[k] += (x[k] - mean[k]).powi(2) / n as f64;
        }
    }
    sd.iter_mut().for_each(|s| *s = if s.sqrt() > 1e-12 { s.sqrt() } else { 1.0 });
    let z = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { (rows[i * p + j - 1] - mean[j - 1]) / sd[j - 1] });
    (z, mean, sd)
}

fn unstandardize(beta: &DVector<f64>, mean: &[f64], sd: &[f64]) -> LinearModel {
    let coef: Vec<f64> = (0..mean.len()).map(|k| beta[k + 1] / sd[k]).collect();
    let intercept = beta[0] - coef.iter().zip(mean).map(|(c, m)| c * m).sum::<f64>();
    LinearModel { intercept, coef }
}

/// Logistic regression of `targets` (0/1) on all covariates with intercept.
///
/// Fails with `NoConvergence` after [`IRLS_MAX_ITER`] iterations or when a standardized
/// coefficient exceeds the separation threshold.
pub fn fit_logistic(rows: &[f64], targets: &[f64], p: usize) -> Result<LogisticFit> {
    let n = targets.len();
    if rows.len() != n * p || n == 0 {
        return Err(Error::DimensionMismatch {
            expected: n * p,
            actual: rows.len(),
        });
    }
    let (z, mean, sd) = standardized_design(rows, p);
    let t = DVector::from_column_slice(targets);
    let mut beta = DVector::<f64>::zeros(p + 1);
    for iter in 0..IRLS_MAX_ITER {
        let eta = &z * &beta;
        let mu = eta.map(logistic);
        let grad = z.transpose() * (&t - &mu) / n as f64;
        let gnorm = grad.norm();
        // separation: fitted values sit at 0/1 on every row
        let perfect = t.iter().zip(mu.iter()).all(|(a, b)| (a - b).abs() < SEPARATION_RESIDUAL);
        if perfect || beta.iter().skip(1).any(|b| b.abs() > SEPARATION_COEF) {
            break;
        }
        if gnorm <= IRLS_GRAD_TOL {
            return Ok(LogisticFit {
                model: unstandardize(&beta, &mean, &sd),
                iterations: iter,
                grad_norm: gnorm,
            });
        }
        let wts = mu.map(|m| (m * (1.0 - m)).max(1e-12));
        let mut zw = z.clone();
        for (i, mut row) in zw.row_iter_mut().enumerate() {
            row *= wts[i];
        }
        let info = zw.transpose() * &z / n as f64;
        let step = info
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or(Error::NoConvergence {
                what: "logistic IRLS",
                iterations: iter,
            })?;
        beta += step;
    }
    Err(Error::NoConvergence {
        what: "logistic IRLS",
        iterations: IRLS_MAX_ITER,
    })
}

/// Least squares of `targets` on covariates with intercept, over `idx` rows only.
pub fn fit_ols(sample: &Sample, idx: &[usize], targets: &[f64]) -> Result<LinearModel> {
    let p = sample.p();
    if idx.len() <= p {
        return Err(Error::InvalidConfig(format!("{} rows cannot identify {} coefficients", idx.len(), p + 1)));
    }
    let rows: Vec<f64> = idx.iter().flat_map(|&i| sample.x(i).iter().copied()).collect();
    let (z, mean, sd) = standardized_design(&rows, p);
    let t = DVector::from_iterator(idx.len(), idx.iter().map(|&i| targets[i]));
    let ztz = z.transpose() * &z;
    let zty = z.transpose() * t;
    let beta = ztz
        .cholesky()
        .map(|c| c.solve(&zty))
        .ok_or_else(|| Error::ShapeMismatch("collinear covariates in least squares".into()))?;
    Ok(unstandardize(&beta, &mean, &sd))
}

/// Logistic propensity for `D = 1` on a two-level sample, as a score set.
pub fn glm_propensity(sample: &Sample, floor: f64) -> Result<(PropensitySet, LogisticFit)> {
    if sample.levels() != 2 {
        return Err(Error::InvalidConfig("the logistic baseline handles two treatment levels".into()));
    }
    let fit = fit_logistic(sample.covariates(), &sample.indicator(1), sample.p())?;
    let pi1 = fit.predict_rows(sample.covariates());
    Ok((PropensitySet::binary(pi1, floor)?, fit))
}

/// IPW through the shared pipeline with a logistic propensity and least-squares `E_d`.
pub fn glm_ipw(sample: &Sample, estimand: &EstimandSpec, opts: &PipelineOptions) -> Result<EffectEstimate> {
    estimand.check(sample.levels())?;
    let (ps, _) = glm_propensity(sample, opts.trim_floor)?;
    let point = point_estimate(sample, estimand, &ps)?;
    let h = h_values(sample, &point, &ps, opts)?;
    let e_hat = (0..sample.levels())
        .map(|d| {
            let t = derivative_targets(sample, point.beta_hat[d], &estimand.loss);
            Ok(fit_ols(sample, &sample.arm_indices(d), &t)?.predict_rows(sample.covariates()))
        })
        .collect::<Result<Vec<_>>>()?;
    plug_in_effect(sample, point, &ps, h, e_hat, opts.alpha)
}

/// Least-squares outcome regression per arm, averaged; logistic propensity for the variance.
pub fn glm_or(sample: &Sample, estimand: &EstimandSpec, opts: &PipelineOptions) -> Result<EffectEstimate> {
    let (ps, _) = glm_propensity(sample, opts.trim_floor)?;
    let preds = (0..sample.levels())
        .map(|d| Ok(fit_ols(sample, &sample.arm_indices(d), sample.outcomes())?.predict_rows(sample.covariates())))
        .collect::<Result<Vec<_>>>()?;
    or_effect_from_predictions(sample, estimand, &preds, &ps, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_logistic_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let rows: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = rows
            .chunks_exact(2)
            .map(|x| f64::from(rng.random::<f64>() < logistic(0.3 + 1.2 * x[0] - 0.7 * x[1])))
            .collect();
        let fit = fit_logistic(&rows, &t, 2).unwrap();
        assert!((fit.model.intercept - 0.3).abs() < 0.08);
        assert!((fit.model.coef[0] - 1.2).abs() < 0.1);
        assert!((fit.model.coef[1] + 0.7).abs() < 0.1);
    }

    #[test]
    fn separation_is_flagged() {
        let rows = vec![-2.0, -1.0, 1.0, 2.0];
        let t = vec![0.0, 0.0, 1.0, 1.0];
        assert!(matches!(fit_logistic(&rows, &t, 1), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn ols_is_exact_on_linear_data() {
        let rows = vec![0.0, 1.0, 1.0, 0.0, 2.0, 3.0, -1.0, 0.5, 0.3, 0.3];
        let y: Vec<f64> = rows.chunks_exact(2).map(|x| 1.0 + 2.0 * x[0] - 3.0 * x[1]).collect();
        let s = Sample::new(y.clone(), vec![0; 5], rows, 2).unwrap();
        let m = fit_ols(&s, &[0, 1, 2, 3, 4], &y).unwrap();
        assert!((m.intercept - 1.0).abs() < 1e-10);
        assert!((m.coef[0] - 2.0).abs() < 1e-10 && (m.coef[1] + 3.0).abs() < 1e-10);
    }
}
