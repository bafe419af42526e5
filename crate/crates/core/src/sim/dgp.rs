//! Simulation design with nonlinear propensity and outcome models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ann::network::logistic;
use crate::error::{Error, Result};
use crate::sample::Sample;

/// Covariates used by the design; extra columns are noise.
pub const ACTIVE_COVARIATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// `logit pi = X1 X2 - X3 X4 X5`.
    #[default]
    Nonlinear,
    /// `logit pi = 0.8 X1 - 0.6 X2 + 0.4 X3`; a logistic GLM is correctly specified here.
    LinearLogit,
}

impl Design {
    pub fn logit(self, x: &[f64]) -> f64 {
        match self {
            Design::Nonlinear => x[0] * x[1] - x[2] * x[3] * x[4],
            Design::LinearLogit => 0.8 * x[0] - 0.6 * x[1] + 0.4 * x[2],
        }
    }

    pub fn propensity(self, x: &[f64]) -> f64 {
        logistic(self.logit(x))
    }
}

/// `E[Y(d) | X = x]`.
pub fn true_regression(d: usize, x: &[f64]) -> f64 {
    let base = x[0] * x[0] + x[1] * x[1] + 2.0 * x[0] * x[1];
    let s = (x[2] + x[3] * x[4]).sin();
    if d == 1 {
        base - 2.0 * s + 1.0
    } else {
        base + s - 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpDraw {
    pub sample: Sample,
    pub true_propensity: Vec<f64>,
    /// `(Y_i(0), Y_i(1))`.
    pub potential_outcomes: Vec<[f64; 2]>,
    /// `(E[Y(0) | X_i], E[Y(1) | X_i])`.
    pub true_or: Vec<[f64; 2]>,
}

impl DgpDraw {
    /// Per-level true score vectors, `pi_0 = 1 - pi_1`.
    pub fn true_scores(&self) -> Vec<Vec<f64>> {
        vec![
            self.true_propensity.iter().map(|p| 1.0 - p).collect(),
            self.true_propensity.clone(),
        ]
    }
}

pub fn generate_dgp(n: usize, p: usize, seed: u64) -> Result<DgpDraw> {
    generate_design(Design::Nonlinear, n, p, seed)
}

/// One draw: `X ~ U[-1,1]^p`, `D ~ Bernoulli(pi(X))`, `Y(d) = E[Y(d)|X] + eps` with one shared
/// `eps ~ N(0,1)`, `Y = Y(D)`.
pub fn generate_design(design: Design, n: usize, p: usize, seed: u64) -> Result<DgpDraw> {
    if p < ACTIVE_COVARIATES {
        return Err(Error::InvalidConfig(format!("the design needs p >= 5, got {p}")));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("n must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covariates = Vec::with_capacity(n * p);
    let mut treatments = Vec::with_capacity(n);
    let mut outcomes = Vec::with_capacity(n);
    let mut true_propensity = Vec::with_capacity(n);
    let mut potential_outcomes = Vec::with_capacity(n);
    let mut true_or = Vec::with_capacity(n);
    for _ in 0..n {
        let start = covariates.len();
        for _ in 0..p {
            covariates.push(rng.random_range(-1.0..1.0));
        }
        let x = &covariates[start..];
        let pi = design.propensity(x);
        let d = usize::from(rng.random::<f64>() < pi);
        let eps: f64 = rng.sample(StandardNormal);
        let g = [true_regression(0, x), true_regression(1, x)];
        let y = [g[0] + eps, g[1] + eps];
        treatments.push(d);
        outcomes.push(y[d]);
        true_propensity.push(pi);
        potential_outcomes.push(y);
        true_or.push(g);
    }
    Ok(DgpDraw {
        sample: Sample::new(outcomes, treatments, covariates, p)?,
        true_propensity,
        potential_outcomes,
        true_or,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn propensity_at_origin_is_half() {
        assert_eq!(Design::Nonlinear.propensity(&[0.0; 5]), 0.5);
    }

    #[test]
    fn regression_examples() {
        let x = [1.0, 1.0, 1.0, 0.0, 0.0];
        let s1 = 1f64.sin();
        assert!((true_regression(1, &x) - (5.0 - 2.0 * s1)).abs() < 1e-15);
        assert!((true_regression(1, &x) - 3.3171).abs() < 1e-4);
        assert!((true_regression(0, &x) - (4.0 + s1 - 1.0)).abs() < 1e-15);
        assert!((true_regression(0, &x) - 3.8415).abs() < 1e-4);
    }

    #[test]
    fn observed_outcome_matches_assigned_potential_outcome() {
        let draw = generate_dgp(500, 7, 3).unwrap();
        for i in 0..500 {
            let d = draw.sample.treatments()[i];
            assert_eq!(draw.sample.outcomes()[i], draw.potential_outcomes[i][d]);
            assert!(draw.true_propensity[i] > 0.0 && draw.true_propensity[i] < 1.0);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(generate_dgp(50, 5, 9).unwrap(), generate_dgp(50, 5, 9).unwrap());
        assert_ne!(generate_dgp(50, 5, 9).unwrap(), generate_dgp(50, 5, 10).unwrap());
    }

    #[test]
    fn rejects_small_p() {
        assert!(generate_dgp(10, 4, 0).is_err());
    }
}
