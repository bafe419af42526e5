//! K-fold cross-validated grid search over network hyperparameters.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backprop::{objective_value, Batch, Objective};
use super::network::{Activation, NetworkConfig, WeightBound};
use super::train::{fit_network, gather};
use crate::error::{Error, Result};
use crate::sample::Sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub widths: Vec<Vec<usize>>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub epochs: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_bound")]
    pub weight_bound: WeightBound,
    #[serde(default)]
    pub seed: u64,
}

fn default_folds() -> usize {
    5
}
fn default_activation() -> Activation {
    Activation::Relu
}
fn default_bound() -> WeightBound {
    WeightBound::Unbounded
}

impl Default for CvGrid {
    fn default() -> Self {
        Self {
            widths: vec![vec![4], vec![8], vec![16], vec![32]],
            learning_rates: vec![0.01, 0.001],
            batch_sizes: vec![64, 256],
            epochs: vec![100, 300],
            folds: 5,
            activation: Activation::Relu,
            weight_bound: WeightBound::Unbounded,
            seed: 0,
        }
    }
}

impl CvGrid {
    /// Half-size grid used by the desk-scale simulation defaults.
    pub fn desk() -> Self {
        Self {
            widths: vec![vec![8], vec![32]],
            learning_rates: vec![0.05, 0.01],
            batch_sizes: vec![64],
            epochs: vec![100, 300],
            ..Self::default()
        }
    }

    /// A one-point grid.
    pub fn single(config: &NetworkConfig) -> Self {
        Self {
            widths: vec![config.widths.clone()],
            learning_rates: vec![config.learning_rate],
            batch_sizes: vec![config.batch_size],
            epochs: vec![config.epochs],
            folds: 5,
            activation: config.activation,
            weight_bound: config.weight_bound,
            seed: config.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty()
            || self.learning_rates.is_empty()
            || self.batch_sizes.is_empty()
            || self.epochs.is_empty()
        {
            return Err(Error::InvalidConfig("every grid axis needs a candidate".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("at least two folds are required".into()));
        }
        Ok(())
    }

    /// All grid points in a fixed order, each seeded with the grid seed.
    pub fn candidates(&self) -> Vec<NetworkConfig> {
        let mut out = Vec::new();
        for w in &self.widths {
            for &lr in &self.learning_rates {
                for &bs in &self.batch_sizes {
                    for &ep in &self.epochs {
                        out.push(NetworkConfig {
                            widths: w.clone(),
                            activation: self.activation,
                            weight_bound: self.weight_bound,
                            learning_rate: lr,
                            batch_size: bs,
                            epochs: ep,
                            seed: self.seed,
                        });
                    }
                }
            }
        }
        out
    }
}

/// One grid point's mean held-out loss; `None` when any fold diverged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub config: NetworkConfig,
    pub cv_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub best: NetworkConfig,
    pub best_loss: f64,
    pub table: Vec<CvRow>,
}

/// Held-out loss on the objective's natural scale: cross-entropy or mean squared error.
fn held_out_loss(net: &super::network::FittedNetwork, xs: &[f64], ts: &[f64], objective: Objective) -> f64 {
    let v = objective_value(net, Batch { inputs: xs, targets: ts }, objective);
    match objective {
        Objective::Bernoulli => v,
        Objective::SquaredError => 2.0 * v,
    }
}

/// Grid search for the propensity (`Bernoulli`, all rows, target `I(D = d)`) or the outcome
/// regression (`SquaredError`, arm-`d` rows, target `Y`).
pub fn cv_select(sample: &Sample, d: usize, grid: &CvGrid, objective: Objective) -> Result<CvOutcome> {
    let targets = match objective {
        Objective::Bernoulli => sample.indicator(d),
        Objective::SquaredError => sample.outcomes().to_vec(),
    };
    cv_select_with_targets(sample, d, &targets, grid, objective)
}

/// [`cv_select`] with explicit per-row targets (length `n`).
pub fn cv_select_with_targets(
    sample: &Sample,
    d: usize,
    targets: &[f64],
    grid: &CvGrid,
    objective: Objective,
) -> Result<CvOutcome> {
    grid.validate()?;
    if targets.len() != sample.n() {
        return Err(Error::DimensionMismatch {
            expected: sample.n(),
            actual: targets.len(),
        });
    }
    let rows: Vec<usize> = match objective {
        Objective::Bernoulli => (0..sample.n()).collect(),
        Objective::SquaredError => sample.arm_indices(d),
    };
    if rows.is_empty() {
        return Err(Error::EmptyArm(d));
    }
    if grid.folds > rows.len() {
        return Err(Error::InvalidConfig(format!(
            "{} folds exceed {} rows",
            grid.folds,
            rows.len()
        )));
    }
    let (xs, ts) = gather(sample, &rows, targets);
    let p = sample.p();
    let folds = fold_assignment(rows.len(), grid.folds, grid.seed);

    let splits: Vec<Split> = (0..grid.folds)
        .map(|k| Split::new(&xs, &ts, p, &folds, k))
        .collect();

    let table: Vec<CvRow> = grid
        .candidates()
        .into_par_iter()
        .map(|config| {
            let mut total = 0.0;
            for (k, split) in splits.iter().enumerate() {
                let mut cfg = config.clone();
                cfg.seed = fold_seed(config.seed, k);
                let net = match fit_network(&split.train_x, &split.train_t, p, objective, &cfg) {
                    Ok(net) => net,
                    Err(_) => {
                        return CvRow {
                            config,
                            cv_loss: None,
                        }
                    }
                };
                let loss = held_out_loss(&net, &split.test_x, &split.test_t, objective);
                if !loss.is_finite() {
                    return CvRow {
                        config,
                        cv_loss: None,
                    };
                }
                total += loss;
            }
            CvRow {
                config,
                cv_loss: Some(total / splits.len() as f64),
            }
        })
        .collect();

    let (best, best_loss) = table
        .iter()
        .filter_map(|r| r.cv_loss.map(|l| (r, l)))
        .fold(None::<(&CvRow, f64)>, |acc, (r, l)| match acc {
            Some((_, bl)) if bl <= l => acc,
            _ => Some((r, l)),
        })
        .ok_or(Error::AllCandidatesFailed)?;
    Ok(CvOutcome {
        best: best.config.clone(),
        best_loss,
        table,
    })
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    crate::sim::seed::mix(seed, 0x00cf_0000 + fold as u64)
}

/// Fold label for each row, balanced and shuffled by `seed`.
pub fn fold_assignment(rows: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f01d);
    order.shuffle(&mut rng);
    let mut label = vec![0; rows];
    for (pos, &i) in order.iter().enumerate() {
        label[i] = pos % folds;
    }
    label
}

struct Split {
    train_x: Vec<f64>,
    train_t: Vec<f64>,
    test_x: Vec<f64>,
    test_t: Vec<f64>,
}

impl Split {
    fn new(xs: &[f64], ts: &[f64], p: usize, folds: &[usize], k: usize) -> Self {
        let mut s = Split {
            train_x: Vec::new(),
            train_t: Vec::new(),
            test_x: Vec::new(),
            test_t: Vec::new(),
        };
        for (i, &f) in folds.iter().enumerate() {
            let x = &xs[i * p..(i + 1) * p];
            if f == k {
                s.test_x.extend_from_slice(x);
                s.test_t.push(ts[i]);
            } else {
                s.train_x.extend_from_slice(x);
                s.train_t.push(ts[i]);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced() {
        let labels = fold_assignment(103, 5, 9);
        let mut counts = [0; 5];
        for l in labels {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 20 || c == 21));
    }

    #[test]
    fn candidate_order_is_stable() {
        let g = CvGrid::default();
        let c = g.candidates();
        assert_eq!(c.len(), 32);
        assert_eq!(c[0].widths, vec![4]);
        assert_eq!(c[0].epochs, 100);
        assert_eq!(c[1].epochs, 300);
    }
}
