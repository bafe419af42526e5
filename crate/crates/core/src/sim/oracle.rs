//! Infeasible benchmark with the true propensity and outcome regressions plugged in.

use super::dgp::DgpDraw;
use crate::error::{Error, Result};
use crate::estimand::{EffectKind, EstimandSpec};
use crate::estimators::{PointEstimate, PropensitySet};
use crate::loss::LossFamily;
use crate::normal;
use crate::pipeline::{plug_in_effect, point_estimate, EffectEstimate};
use crate::variance::{confidence_intervals, HEstimate, InfluenceComponents};

/// Mean estimands: efficient-influence (AIPW) averages. Quantile estimands: IPW with the
/// true scores, true `E_d(x) = tau - Phi(beta_d - g_d(x))` and `H_d` from the true densities.
pub fn oracle_estimate(draw: &DgpDraw, estimand: &EstimandSpec, alpha: f64, floor: f64) -> Result<EffectEstimate> {
    estimand.check(2)?;
    let ps = PropensitySet::from_scores(draw.true_scores(), floor)?;
    match estimand.loss.family {
        LossFamily::Squared => aipw(draw, estimand, &ps, alpha),
        LossFamily::Check { tau } => quantile(draw, estimand, &ps, tau, alpha),
        LossFamily::AsymmetricSquared { .. } => Err(Error::InvalidConfig(
            "the oracle benchmark covers mean and quantile estimands".into(),
        )),
    }
}

fn aipw(draw: &DgpDraw, estimand: &EstimandSpec, ps: &PropensitySet, alpha: f64) -> Result<EffectEstimate> {
    let s = &draw.sample;
    let n = s.n();
    let y = s.outcomes();
    let t = s.treatments();
    let mut beta = vec![0.0; 2];
    let mut infl = vec![vec![0.0; n]; 2];
    for d in 0..2 {
        let g = |i: usize| draw.true_or[i][d];
        let dd = |i: usize| f64::from(u8::from(t[i] == d));
        match estimand.kind {
            EffectKind::Population => {
                let psi: Vec<f64> = (0..n)
                    .map(|i| {
                        let pi = ps.trimmed(d, i);
                        dd(i) * y[i] / pi - (dd(i) - ps.scores[d][i]) / pi * g(i)
                    })
                    .collect();
                beta[d] = psi.iter().sum::<f64>() / n as f64;
                infl[d] = psi.iter().map(|v| v - beta[d]).collect();
            }
            EffectKind::TreatedSubgroup(dp) => {
                let n_t = s.arm_count(dp);
                if n_t == 0 {
                    return Err(Error::EmptyArm(dp));
                }
                let p_hat = n_t as f64 / n as f64;
                let treated = |i: usize| f64::from(u8::from(t[i] == dp));
                let num: Vec<f64> = (0..n)
                    .map(|i| {
                        if d == dp {
                            treated(i) * y[i]
                        } else {
                            treated(i) * g(i) + ps.scores[dp][i] * dd(i) / ps.trimmed(d, i) * (y[i] - g(i))
                        }
                    })
                    .collect();
                beta[d] = num.iter().sum::<f64>() / n_t as f64;
                infl[d] = (0..n).map(|i| (num[i] - beta[d] * treated(i)) / p_hat).collect();
            }
        }
    }
    let covariance = confidence_intervals(&beta, &[1.0, 1.0], &infl, alpha, estimand.contrast.as_deref())?;
    let unit = HEstimate {
        value: 1.0,
        sieve: f64::NAN,
        analytic: Some(1.0),
        relative_gap: None,
    };
    let e_hat = (0..2).map(|d| draw.true_or.iter().map(|g| g[d]).collect()).collect();
    Ok(EffectEstimate {
        point: PointEstimate {
            beta_hat: beta,
            estimand: estimand.clone(),
            foc_residuals: vec![0.0; 2],
            foc_jump_bound: vec![0.0; 2],
            trimmed: (0..2).map(|d| ps.trimmed_count(d)).collect(),
        },
        influence: InfluenceComponents {
            h_hat: vec![unit; 2],
            e_hat,
            s_hat: infl,
        },
        covariance,
        horvitz_thompson: None,
    })
}

fn quantile(draw: &DgpDraw, estimand: &EstimandSpec, ps: &PropensitySet, tau: f64, alpha: f64) -> Result<EffectEstimate> {
    let s = &draw.sample;
    let point = point_estimate(s, estimand, ps)?;
    let scale = estimand.loss.scale;
    let mut h = Vec::with_capacity(2);
    let mut e_hat = Vec::with_capacity(2);
    for d in 0..2 {
        let b = point.beta_hat[d];
        e_hat.push(draw.true_or.iter().map(|g| scale * (tau - normal::cdf(b - g[d]))).collect::<Vec<f64>>());
        let value = match estimand.kind {
            EffectKind::Population => {
                draw.true_or.iter().map(|g| normal::pdf(b - g[d])).sum::<f64>() / s.n() as f64
            }
            EffectKind::TreatedSubgroup(dp) => {
                draw.true_or
                    .iter()
                    .enumerate()
                    .map(|(i, g)| ps.scores[dp][i] * normal::pdf(b - g[d]))
                    .sum::<f64>()
                    / s.arm_count(dp) as f64
            }
        };
        h.push(HEstimate {
            value: scale * value,
            sieve: f64::NAN,
            analytic: Some(scale * value),
            relative_gap: None,
        });
    }
    plug_in_effect(s, point, ps, h, e_hat, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossSpec;
    use crate::sim::dgp::generate_dgp;

    #[test]
    fn constant_propensity_and_zero_regression_reduce_to_ipw_means() {
        let mut draw = generate_dgp(400, 5, 2).unwrap();
        draw.true_propensity = vec![0.4; 400];
        draw.true_or = vec![[0.0, 0.0]; 400];
        let est = EstimandSpec::population(LossSpec::squared()).with_difference(2);
        let e = oracle_estimate(&draw, &est, 0.05, 1e-3).unwrap();
        let y = draw.sample.outcomes();
        let t = draw.sample.treatments();
        let m1: f64 = (0..400).filter(|&i| t[i] == 1).map(|i| y[i] / 0.4).sum::<f64>() / 400.0;
        let m0: f64 = (0..400).filter(|&i| t[i] == 0).map(|i| y[i] / 0.6).sum::<f64>() / 400.0;
        assert!((e.beta_hat()[1] - m1).abs() < 1e-12 && (e.beta_hat()[0] - m0).abs() < 1e-12);
    }

    #[test]
    fn oracle_ate_is_near_two() {
        let draw = generate_dgp(4000, 5, 3).unwrap();
        let est = EstimandSpec::population(LossSpec::squared()).with_difference(2);
        let e = oracle_estimate(&draw, &est, 0.05, 1e-3).unwrap();
        let iv = e.headline();
        assert!((iv.estimate - 2.0).abs() < 4.0 * iv.se, "{iv:?}");
    }
}
