//! Exponential-family sieve for the conditional outcome density on one arm.
//!
//! `log f(y | x) = a^T r(y, x) - log Z(x; a)` with `r` a tensor of standardized-`y` monomials
//! and covariate features; `Z` is a per-row Gauss-Legendre integral over `y`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::quadrature::GaussLegendre;
use crate::error::{Error, Result};
use crate::sample::Sample;

pub const DEFAULT_NODES: usize = 64;
pub const DEFAULT_RIDGE: f64 = 1e-8;
const GRAD_TOL: f64 = 1e-8;
const STALL_TOL: f64 = 1e-6;
const MAX_NEWTON: usize = 100;
const EXP_LIMIT: f64 = 700.0;
/// Tail slack of the `y` range, in outcome standard deviations.
const RANGE_SLACK: f64 = 3.0;

/// `y^y_power * x_covariate` in standardized units; `covariate = None` is the constant feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisTerm {
    pub y_power: u32,
    pub covariate: Option<usize>,
}

/// Tensor basis `{y, .., y^y_degree} x {1, x_1, .., x_covariates}`, truncated to `max_terms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SieveBasis {
    pub y_degree: u32,
    pub covariates: usize,
    pub max_terms: usize,
}

impl Default for SieveBasis {
    fn default() -> Self {
        Self {
            y_degree: 3,
            covariates: 5,
            max_terms: 24,
        }
    }
}

impl SieveBasis {
    pub fn terms(&self, p: usize) -> Vec<BasisTerm> {
        let mut out = Vec::new();
        let feats = std::iter::once(None).chain((0..self.covariates.min(p)).map(Some));
        for covariate in feats {
            for y_power in 1..=self.y_degree {
                out.push(BasisTerm { y_power, covariate });
            }
        }
        out.truncate(self.max_terms);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveDensityModel {
    pub level: usize,
    pub terms: Vec<BasisTerm>,
    pub coef: Vec<f64>,
    pub y_center: f64,
    pub y_scale: f64,
    pub x_center: Vec<f64>,
    pub x_scale: Vec<f64>,
    /// Standardized-`y` quadrature nodes and weights.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Standardized support `[lo, hi]` of the fitted density.
    pub range: (f64, f64),
    pub iterations: usize,
    pub grad_norm: f64,
}

impl SieveDensityModel {
    fn feature(&self, term: &BasisTerm, x: &[f64]) -> f64 {
        match term.covariate {
            None => 1.0,
            Some(j) => (x[j] - self.x_center[j]) / self.x_scale[j],
        }
    }

    /// `d/dy log f(y | x)` on the original outcome scale.
    pub fn score(&self, y: f64, x: &[f64]) -> f64 {
        let ys = (y - self.y_center) / self.y_scale;
        let s: f64 = self
            .terms
            .iter()
            .zip(&self.coef)
            .map(|(t, a)| a * t.y_power as f64 * ys.powi(t.y_power as i32 - 1) * self.feature(t, x))
            .sum();
        s / self.y_scale
    }

    /// Normalized density `f(y | x)` on the original outcome scale (zero outside the grid range).
    pub fn density(&self, y: f64, x: &[f64]) -> f64 {
        let ys = (y - self.y_center) / self.y_scale;
        if ys < self.range.0 || ys > self.range.1 {
            return 0.0;
        }
        let feats: Vec<f64> = self.terms.iter().map(|t| self.feature(t, x)).collect();
        let exponent = |v: f64| -> f64 {
            self.terms
                .iter()
                .zip(&self.coef)
                .zip(&feats)
                .map(|((t, a), c)| a * v.powi(t.y_power as i32) * c)
                .sum()
        };
        let z: f64 = self.nodes.iter().zip(&self.weights).map(|(&v, &w)| w * exponent(v).exp()).sum();
        exponent(ys).exp() / z / self.y_scale
    }
}

/// Fits the default tensor basis on the rows with `D = d`.
pub fn fit_sieve_density(sample: &Sample, d: usize, basis: &SieveBasis) -> Result<SieveDensityModel> {
    fit_sieve_density_terms(sample, d, &basis.terms(sample.p()), DEFAULT_RIDGE)
}

/// Ridge-penalized sieve MLE for an explicit term list, by damped Newton.
pub fn fit_sieve_density_terms(
    sample: &Sample,
    d: usize,
    terms: &[BasisTerm],
    ridge: f64,
) -> Result<SieveDensityModel> {
    let rows = sample.arm_indices(d);
    if rows.is_empty() {
        return Err(Error::EmptyArm(d));
    }
    if terms.is_empty() || terms.iter().any(|t| t.y_power == 0) {
        return Err(Error::InvalidConfig("sieve terms need a positive y power".into()));
    }
    let p = sample.p();
    if terms.iter().any(|t| t.covariate.is_some_and(|j| j >= p)) {
        return Err(Error::InvalidConfig("sieve term references a missing covariate".into()));
    }

    let y: Vec<f64> = rows.iter().map(|&i| sample.outcomes()[i]).collect();
    let m = y.len() as f64;
    let y_center = y.iter().sum::<f64>() / m;
    let sd = (y.iter().map(|v| (v - y_center).powi(2)).sum::<f64>() / m).sqrt();
    let y_scale = if sd > 1e-12 { sd } else { 1.0 };
    let (ymin, ymax) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let lo = (ymin - RANGE_SLACK * y_scale - y_center) / y_scale;
    let hi = (ymax + RANGE_SLACK * y_scale - y_center) / y_scale;
    let rule = GaussLegendre::new(DEFAULT_NODES, lo, hi);

    let mut x_center = vec![0.0; p];
    let mut x_scale = vec![1.0; p];
    for j in 0..p {
        let col: Vec<f64> = rows.iter().map(|&i| sample.x(i)[j]).collect();
        let mu = col.iter().sum::<f64>() / m;
        let s = (col.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m).sqrt();
        x_center[j] = mu;
        x_scale[j] = if s > 1e-12 { s } else { 1.0 };
    }

    let mut model = SieveDensityModel {
        level: d,
        terms: terms.to_vec(),
        coef: vec![0.0; terms.len()],
        y_center,
        y_scale,
        x_center,
        x_scale,
        nodes: rule.nodes,
        weights: rule.weights,
        range: (lo, hi),
        iterations: 0,
        grad_norm: f64::INFINITY,
    };

    let data = SieveData::new(&model, sample, &rows);
    let k = terms.len();
    let mut a = DVector::<f64>::zeros(k);
    let mut eval = data.evaluate(&model, a.as_slice(), ridge, true).expect("zero coefficients are finite");
    for iter in 0..MAX_NEWTON {
        let gnorm = eval.grad.norm();
        model.iterations = iter;
        model.grad_norm = gnorm;
        if gnorm <= GRAD_TOL {
            break;
        }
        // Ascent direction: (-Hess) step = grad; ridge keeps -Hess positive definite.
        let neg_hess = -eval.hess.clone();
        let step = match neg_hess.clone().cholesky() {
            Some(ch) => ch.solve(&eval.grad),
            None => {
                let mut reg = neg_hess;
                for i in 0..k {
                    reg[(i, i)] += 1e-6;
                }
                reg.cholesky().map(|c| c.solve(&eval.grad)).unwrap_or_else(|| eval.grad.clone())
            }
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &a + t * &step;
            if let Some(e) = data.evaluate(&model, trial.as_slice(), ridge, false) {
                if e.value >= eval.value - 1e-14 * eval.value.abs().max(1.0) {
                    accepted = Some((trial, e));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, _)) => {
                a = trial;
                eval = data
                    .evaluate(&model, a.as_slice(), ridge, true)
                    .ok_or(Error::QuadratureOverflow(f64::INFINITY))?;
            }
            None => break,
        }
        model.iterations = iter + 1;
        model.grad_norm = eval.grad.norm();
    }
    // A rank-deficient basis can stall the line search a hair above the tolerance.
    if model.grad_norm > STALL_TOL {
        return Err(Error::NoConvergence {
            what: "sieve density Newton",
            iterations: model.iterations,
        });
    }
    if eval.max_exponent > EXP_LIMIT {
        return Err(Error::QuadratureOverflow(eval.max_exponent));
    }
    model.coef = a.as_slice().to_vec();
    Ok(model)
}

struct SieveData {
    k: usize,
    max_power: usize,
    /// Per row: covariate feature of each term.
    feats: Vec<Vec<f64>>,
    /// Per row: basis vector at the observed outcome.
    observed: Vec<Vec<f64>>,
    /// Node powers `y_q^s`, `s = 0..=2 * max_power`.
    node_pow: Vec<Vec<f64>>,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
    max_exponent: f64,
}

impl SieveData {
    fn new(model: &SieveDensityModel, sample: &Sample, rows: &[usize]) -> Self {
        let k = model.terms.len();
        let max_power = model.terms.iter().map(|t| t.y_power as usize).max().unwrap_or(1);
        let feats: Vec<Vec<f64>> = rows
            .iter()
            .map(|&i| model.terms.iter().map(|t| model.feature(t, sample.x(i))).collect())
            .collect();
        let observed = rows
            .iter()
            .zip(&feats)
            .map(|(&i, f)| {
                let ys = (sample.outcomes()[i] - model.y_center) / model.y_scale;
                model
                    .terms
                    .iter()
                    .zip(f)
                    .map(|(t, c)| ys.powi(t.y_power as i32) * c)
                    .collect()
            })
            .collect();
        let node_pow = model
            .nodes
            .iter()
            .map(|&v| (0..=2 * max_power).map(|s| v.powi(s as i32)).collect())
            .collect();
        Self {
            k,
            max_power,
            feats,
            observed,
            node_pow,
        }
    }

    /// Penalized mean log-likelihood, gradient and Hessian at `a`; `None` on overflow.
    fn evaluate(&self, model: &SieveDensityModel, a: &[f64], ridge: f64, with_hess: bool) -> Option<Eval> {
        let k = self.k;
        let q = model.nodes.len();
        let mp = self.max_power;
        let mut value = 0.0;
        let mut grad = DVector::<f64>::zeros(k);
        let mut hess = DMatrix::<f64>::zeros(k, k);
        let mut max_exponent = 0.0f64;
        // Coefficient of y^s in the exponent, per row.
        let mut poly = vec![0.0; mp + 1];
        let mut expo = vec![0.0; q];
        let mut moments = vec![0.0; 2 * mp + 1];
        for (feats, obs) in self.feats.iter().zip(&self.observed) {
            poly.iter_mut().for_each(|c| *c = 0.0);
            for ((t, c), ak) in model.terms.iter().zip(feats).zip(a) {
                poly[t.y_power as usize] += ak * c;
            }
            let mut top = f64::NEG_INFINITY;
            for (e, pw) in expo.iter_mut().zip(&self.node_pow) {
                *e = (1..=mp).map(|s| poly[s] * pw[s]).sum();
                top = top.max(*e);
                max_exponent = max_exponent.max(*e);
            }
            if !top.is_finite() {
                return None;
            }
            let mut z = 0.0;
            moments.iter_mut().for_each(|m| *m = 0.0);
            for ((e, w), pw) in expo.iter().zip(&model.weights).zip(&self.node_pow) {
                let u = w * (e - top).exp();
                z += u;
                for (m, p) in moments.iter_mut().zip(pw) {
                    *m += u * p;
                }
            }
            let log_z = top + z.ln();
            moments.iter_mut().for_each(|m| *m /= z);
            let fit: f64 = obs.iter().zip(a).map(|(r, ak)| r * ak).sum();
            value += fit - log_z;
            for (j, tj) in model.terms.iter().enumerate() {
                let mean_j = moments[tj.y_power as usize] * feats[j];
                grad[j] += obs[j] - mean_j;
                if with_hess {
                    for (l, tl) in model.terms.iter().enumerate().take(j + 1) {
                        let mean_l = moments[tl.y_power as usize] * feats[l];
                        let second = moments[(tj.y_power + tl.y_power) as usize] * feats[j] * feats[l];
                        hess[(j, l)] -= second - mean_j * mean_l;
                    }
                }
            }
        }
        let m = self.feats.len() as f64;
        value /= m;
        grad /= m;
        let a_vec = DVector::from_column_slice(a);
        value -= 0.5 * ridge * a_vec.norm_squared();
        grad -= ridge * &a_vec;
        if with_hess {
            hess /= m;
            for j in 0..k {
                for l in 0..j {
                    hess[(l, j)] = hess[(j, l)];
                }
                hess[(j, j)] -= ridge;
            }
        }
        if !value.is_finite() {
            return None;
        }
        Some(Eval {
            value,
            grad,
            hess,
            max_exponent,
        })
    }
}
