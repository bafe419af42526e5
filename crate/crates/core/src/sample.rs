//! Observed data and its runtime validation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum observations per arm before any nuisance function is fitted.
pub const MIN_ARM_SIZE: usize = 30;

/// Observed `(Y, D, X)` table. Covariates are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    outcomes: Vec<f64>,
    treatments: Vec<usize>,
    covariates: Vec<f64>,
    p: usize,
}

impl Sample {
    /// Builds a sample, checking only that the three fields have matching row counts.
    /// Content checks live in [`validate_sample`].
    pub fn new(
        outcomes: Vec<f64>,
        treatments: Vec<usize>,
        covariates: Vec<f64>,
        p: usize,
    ) -> Result<Self> {
        let n = outcomes.len();
        if p == 0 {
            return Err(Error::ShapeMismatch("p must be positive".into()));
        }
        if n == 0 {
            return Err(Error::ShapeMismatch("sample is empty".into()));
        }
        if treatments.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} outcomes but {} treatments",
                n,
                treatments.len()
            )));
        }
        if covariates.len() != n * p {
            return Err(Error::ShapeMismatch(format!(
                "covariate buffer has {} entries, expected {}x{}",
                covariates.len(),
                n,
                p
            )));
        }
        Ok(Self {
            outcomes,
            treatments,
            covariates,
            p,
        })
    }

    pub fn from_rows(outcomes: Vec<f64>, treatments: Vec<usize>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::ShapeMismatch("ragged covariate rows".into()));
        }
        if rows.len() != outcomes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} outcomes but {} covariate rows",
                outcomes.len(),
                rows.len()
            )));
        }
        let covariates = rows.iter().flatten().copied().collect();
        Self::new(outcomes, treatments, covariates, p)
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Highest treatment level `J`.
    pub fn max_level(&self) -> usize {
        self.treatments.iter().copied().max().unwrap_or(0)
    }

    /// Number of treatment levels `J + 1`.
    pub fn levels(&self) -> usize {
        self.max_level() + 1
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn treatments(&self) -> &[usize] {
        &self.treatments
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    /// `D_{di} = I(D_i = d)` as 0/1 reals.
    pub fn indicator(&self, d: usize) -> Vec<f64> {
        self.treatments
            .iter()
            .map(|&t| if t == d { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn arm_indices(&self, d: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatments[i] == d).collect()
    }

    pub fn arm_count(&self, d: usize) -> usize {
        self.treatments.iter().filter(|&&t| t == d).count()
    }

    /// Same treatments and covariates with replaced outcomes.
    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Self> {
        Self::new(outcomes, self.treatments.clone(), self.covariates.clone(), self.p)
    }

    /// Rows `idx` as a new sample (treatment levels are kept as-is).
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let outcomes = idx.iter().map(|&i| self.outcomes[i]).collect();
        let treatments = idx.iter().map(|&i| self.treatments[i]).collect();
        let mut covariates = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            covariates.extend_from_slice(self.x(i));
        }
        Self::new(outcomes, treatments, covariates, self.p)
    }
}

/// A named reason a sample cannot be used for estimation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    NonFiniteOutcome(usize),
    NonFiniteCovariate { row: usize, col: usize },
    SingleLevel,
    MissingLevel(usize),
    SparseArm { level: usize, count: usize, required: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFiniteOutcome(i) => write!(f, "non-finite outcome at row {i}"),
            Violation::NonFiniteCovariate { row, col } => {
                write!(f, "non-finite covariate at row {row}, column {col}")
            }
            Violation::SingleLevel => write!(f, "only one treatment level present"),
            Violation::MissingLevel(d) => write!(f, "treatment level {d} never occurs"),
            Violation::SparseArm {
                level,
                count,
                required,
            } => write!(
                f,
                "treatment level {level} has {count} observations, {required} required"
            ),
        }
    }
}

/// Per-arm count required for a `p`-dimensional fit: `max(30, 2p)`.
pub fn required_arm_size(p: usize) -> usize {
    MIN_ARM_SIZE.max(2 * p)
}

/// Returns every violated data condition; empty means the sample is usable.
pub fn validate_sample(sample: &Sample) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, y) in sample.outcomes.iter().enumerate() {
        if !y.is_finite() {
            out.push(Violation::NonFiniteOutcome(i));
        }
    }
    for i in 0..sample.n() {
        for (j, v) in sample.x(i).iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFiniteCovariate { row: i, col: j });
            }
        }
    }
    let levels = sample.levels();
    if levels < 2 {
        out.push(Violation::SingleLevel);
        return out;
    }
    let mut counts = vec![0usize; levels];
    for &t in &sample.treatments {
        counts[t] += 1;
    }
    let required = required_arm_size(sample.p);
    for (d, &count) in counts.iter().enumerate() {
        if count == 0 {
            out.push(Violation::MissingLevel(d));
        } else if count < required {
            out.push(Violation::SparseArm {
                level: d,
                count,
                required,
            });
        }
    }
    out
}

/// [`validate_sample`] as a `Result`.
pub fn ensure_valid(sample: &Sample) -> Result<()> {
    let v = validate_sample(sample);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::ValidationFailed(v))
    }
}
