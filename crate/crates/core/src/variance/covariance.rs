//! Sandwich covariance and Wald intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::two_sided_critical;

const SINGULAR_H: f64 = 1e-10;

/// `V_{dd'} = (H_d H_{d'})^{-1} n^{-1} sum_i S_d(i) S_{d'}(i)` for diagonal `H`.
pub fn covariance(h: &[f64], s: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if h.len() != s.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: s.len(),
        });
    }
    for (level, &value) in h.iter().enumerate() {
        if !(value.abs() >= SINGULAR_H) {
            return Err(Error::SingularH { level, value });
        }
    }
    let n = s.first().map(Vec::len).unwrap_or(0);
    if n == 0 || s.iter().any(|c| c.len() != n) {
        return Err(Error::ShapeMismatch("influence columns must share a nonzero length".into()));
    }
    let k = h.len();
    let mut v = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..=a {
            let cross: f64 = s[a].iter().zip(&s[b]).map(|(x, y)| x * y).sum::<f64>() / n as f64;
            let val = cross / (h[a] * h[b]);
            v[a][b] = val;
            v[b][a] = val;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    /// `sqrt(variance / n)`.
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn z_value(&self) -> f64 {
        self.estimate / self.se
    }
}

fn wald(estimate: f64, variance: f64, n: usize, alpha: f64, index: usize) -> Result<Interval> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("alpha {alpha} not in (0, 1]")));
    }
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::NegativeVariance { index, value: variance });
    }
    let se = (variance / n as f64).sqrt();
    let half = two_sided_critical(alpha) * se;
    Ok(Interval {
        estimate,
        se,
        lower: estimate - half,
        upper: estimate + half,
    })
}

/// `beta_d -/+ z_{alpha/2} sqrt(V_dd / n)` per level.
pub fn component_intervals(beta: &[f64], v: &[Vec<f64>], n: usize, alpha: f64) -> Result<Vec<Interval>> {
    if beta.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            actual: beta.len(),
        });
    }
    beta.iter()
        .enumerate()
        .map(|(d, &b)| wald(b, v[d][d], n, alpha, d))
        .collect()
}

/// `a^T beta -/+ z_{alpha/2} sqrt(a^T V a / n)`.
pub fn contrast_interval(beta: &[f64], v: &[Vec<f64>], n: usize, alpha: f64, a: &[f64]) -> Result<Interval> {
    if a.len() != beta.len() || v.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            actual: a.len(),
        });
    }
    let est: f64 = a.iter().zip(beta).map(|(x, y)| x * y).sum();
    let mut var = 0.0;
    for (i, ai) in a.iter().enumerate() {
        for (j, aj) in a.iter().enumerate() {
            var += ai * v[i][j] * aj;
        }
    }
    // Rounding can push a zero variance a hair negative.
    if var < 0.0 && var > -1e-14 {
        var = 0.0;
    }
    wald(est, var, n, alpha, usize::MAX)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub v_hat: Vec<Vec<f64>>,
    pub n: usize,
    pub alpha: f64,
    pub components: Vec<Interval>,
    pub contrast: Option<Interval>,
}

/// Covariance plus component intervals and an optional contrast interval.
pub fn confidence_intervals(
    beta: &[f64],
    h: &[f64],
    s: &[Vec<f64>],
    alpha: f64,
    contrast: Option<&[f64]>,
) -> Result<CovarianceEstimate> {
    let v_hat = covariance(h, s)?;
    let n = s[0].len();
    let components = component_intervals(beta, &v_hat, n, alpha)?;
    let contrast = contrast.map(|a| contrast_interval(beta, &v_hat, n, alpha, a)).transpose()?;
    Ok(CovarianceEstimate {
        v_hat,
        n,
        alpha,
        components,
        contrast,
    })
}
