//! Plug-in pieces of the influence representation: `H_d`, `E_d(X)` and `S_d`.

use serde::{Deserialize, Serialize};

use super::sieve::SieveDensityModel;
use crate::ann::{train_regression, FittedNetwork, NetworkConfig};
use crate::error::{Error, Result};
use crate::estimators::PropensitySet;
use crate::loss::{LossFamily, LossSpec};
use crate::sample::Sample;

/// `H_d` together with its sieve value and, for squared loss, the analytic value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HEstimate {
    /// Value used downstream: analytic when available, sieve otherwise.
    pub value: f64,
    pub sieve: f64,
    pub analytic: Option<f64>,
    /// `|sieve - analytic| / |analytic|`.
    pub relative_gap: Option<f64>,
}

impl HEstimate {
    fn from_parts(sieve: f64, analytic: Option<f64>) -> Self {
        Self {
            value: analytic.unwrap_or(sieve),
            sieve,
            analytic,
            relative_gap: analytic.map(|a| (sieve - a).abs() / a.abs()),
        }
    }
}

/// `H_d = 2c` for `L(v) = c v^2`; no closed form otherwise.
pub fn analytic_h(loss: &LossSpec) -> Option<f64> {
    match loss.family {
        LossFamily::Squared => Some(2.0 * loss.scale),
        _ => None,
    }
}

/// `-(1/norm) sum_i w_i L'(Y_i - beta) * d/dy log f(Y_i | X_i)` over the arm rows.
fn sieve_h(sample: &Sample, d: usize, beta: f64, loss: &LossSpec, density: &SieveDensityModel, weight: impl Fn(usize) -> f64, norm: f64) -> Result<f64> {
    if density.level != d {
        return Err(Error::InvalidConfig(format!("density fitted on level {} used for level {d}", density.level)));
    }
    let y = sample.outcomes();
    let total: f64 = sample
        .arm_indices(d)
        .into_iter()
        .map(|i| weight(i) * loss.grad(y[i] - beta) * density.score(y[i], sample.x(i)))
        .sum();
    Ok(-total / norm)
}

/// Population `H_d` with `pi_hat` (trimmed) in the weights.
pub fn estimate_h(
    sample: &Sample,
    d: usize,
    beta: f64,
    loss: &LossSpec,
    density: &SieveDensityModel,
    ps: &PropensitySet,
) -> Result<HEstimate> {
    let sieve = sieve_h(sample, d, beta, loss, density, |i| 1.0 / ps.trimmed(d, i), sample.n() as f64)?;
    Ok(HEstimate::from_parts(sieve, analytic_h(loss)))
}

/// Treated-subgroup `H_{d,d'}`: weights `D_d pi_{d'} / pi_d` normalized by `n_{d'}`.
pub fn estimate_h_treated(
    sample: &Sample,
    d: usize,
    d_prime: usize,
    beta: f64,
    loss: &LossSpec,
    density: &SieveDensityModel,
    ps: &PropensitySet,
) -> Result<HEstimate> {
    let n_treated = sample.arm_count(d_prime);
    if n_treated == 0 {
        return Err(Error::EmptyArm(d_prime));
    }
    let weight = |i: usize| {
        if d == d_prime {
            1.0
        } else {
            ps.scores[d_prime][i] / ps.trimmed(d, i)
        }
    };
    let sieve = sieve_h(sample, d, beta, loss, density, weight, n_treated as f64)?;
    Ok(HEstimate::from_parts(sieve, analytic_h(loss)))
}

/// `L'(Y_i - beta)` for every row (the regression targets for `E_d`).
pub fn derivative_targets(sample: &Sample, beta: f64, loss: &LossSpec) -> Vec<f64> {
    sample.outcomes().iter().map(|y| loss.grad(y - beta)).collect()
}

/// Network regression of `L'(Y - beta_d)` on `X` among the arm-`d` rows.
pub fn estimate_e(
    sample: &Sample,
    d: usize,
    beta: f64,
    loss: &LossSpec,
    config: &NetworkConfig,
) -> Result<FittedNetwork> {
    train_regression(sample, d, &derivative_targets(sample, beta, loss), config)
}

/// `S_d(i) = D_i/pi_i L'_i - (D_i - pi_i)/pi_i E_i - n^{-1} sum_j D_j/pi_j L'_j`, with the
/// trimmed score in denominators.
pub fn estimate_s(
    sample: &Sample,
    d: usize,
    beta: f64,
    loss: &LossSpec,
    ps: &PropensitySet,
    e_values: &[f64],
) -> Result<Vec<f64>> {
    check_len(sample, e_values)?;
    let y = sample.outcomes();
    let t = sample.treatments();
    let n = sample.n();
    let ipw: Vec<f64> = (0..n)
        .map(|i| if t[i] == d { loss.grad(y[i] - beta) / ps.trimmed(d, i) } else { 0.0 })
        .collect();
    let center = ipw.iter().sum::<f64>() / n as f64;
    Ok((0..n)
        .map(|i| {
            let di = if t[i] == d { 1.0 } else { 0.0 };
            let pi = ps.trimmed(d, i);
            ipw[i] - (di - ps.scores[d][i]) / pi * e_values[i] - center
        })
        .collect())
}

/// Treated-subgroup influence values
/// `[D_{d'} E_i + pi_{d'} D_d / pi_d (L'_i - E_i)] / p_{d'}`, centered.
///
/// On the `d = d'` arm this is `D_{d'} L'_i / p_{d'}`, the influence of the arm mean.
pub fn estimate_s_treated(
    sample: &Sample,
    d: usize,
    d_prime: usize,
    beta: f64,
    loss: &LossSpec,
    ps: &PropensitySet,
    e_values: &[f64],
) -> Result<Vec<f64>> {
    check_len(sample, e_values)?;
    let n_treated = sample.arm_count(d_prime);
    if n_treated == 0 {
        return Err(Error::EmptyArm(d_prime));
    }
    let p_hat = n_treated as f64 / sample.n() as f64;
    let y = sample.outcomes();
    let t = sample.treatments();
    let raw: Vec<f64> = (0..sample.n())
        .map(|i| {
            if d == d_prime {
                return if t[i] == d { loss.grad(y[i] - beta) / p_hat } else { 0.0 };
            }
            let treated = if t[i] == d_prime { e_values[i] } else { 0.0 };
            let arm = if t[i] == d {
                ps.scores[d_prime][i] / ps.trimmed(d, i) * (loss.grad(y[i] - beta) - e_values[i])
            } else {
                0.0
            };
            (treated + arm) / p_hat
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    Ok(raw.into_iter().map(|v| v - mean).collect())
}

fn check_len(sample: &Sample, e_values: &[f64]) -> Result<()> {
    if e_values.len() != sample.n() {
        return Err(Error::DimensionMismatch {
            expected: sample.n(),
            actual: e_values.len(),
        });
    }
    Ok(())
}

/// `H`, per-row `E_d(X_i)` and `S_d(i)` for every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceComponents {
    pub h_hat: Vec<HEstimate>,
    /// `e_hat[d][i]`.
    pub e_hat: Vec<Vec<f64>>,
    /// `s_hat[d][i]`.
    pub s_hat: Vec<Vec<f64>>,
}

impl InfluenceComponents {
    pub fn h_values(&self) -> Vec<f64> {
        self.h_hat.iter().map(|h| h.value).collect()
    }
}
