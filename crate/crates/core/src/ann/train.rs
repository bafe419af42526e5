//! Mini-batch gradient training of sieve networks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::backprop::{pointwise, Gradients, Objective, Workspace};
use super::network::{FittedNetwork, Link, NetworkConfig, WeightBound};
use super::project::project_l1_in_place;
use crate::error::{Error, Result};
use crate::sample::Sample;

/// Probability range for the output-bias warm start of Bernoulli fits.
const BASE_RATE_CLIP: f64 = 1e-3;

/// Fits a network to row-major `inputs` and `targets` by plain mini-batch gradient descent.
///
/// Inputs are standardized column-wise; for [`Objective::SquaredError`] the targets are
/// standardized too and the fitted network maps back to the original scale.
pub fn fit_network(
    inputs: &[f64],
    targets: &[f64],
    input_dim: usize,
    objective: Objective,
    config: &NetworkConfig,
) -> Result<FittedNetwork> {
    config.validate()?;
    let n = targets.len();
    if n == 0 {
        return Err(Error::InvalidConfig("no training rows".into()));
    }
    if inputs.len() != n * input_dim {
        return Err(Error::DimensionMismatch {
            expected: n * input_dim,
            actual: inputs.len(),
        });
    }

    let link = match objective {
        Objective::Bernoulli => Link::Logit,
        Objective::SquaredError => Link::Identity,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut net = FittedNetwork::initialized(config.clone(), input_dim, link, &mut rng);

    let (center, scale) = column_moments(inputs, input_dim);
    net.input_center = center;
    net.input_scale = scale;

    let mean_t = targets.iter().sum::<f64>() / n as f64;
    if objective == Objective::Bernoulli {
        let rate = mean_t.clamp(BASE_RATE_CLIP, 1.0 - BASE_RATE_CLIP);
        let last = net.layers.len() - 1;
        net.layers[last].bias[0] = (rate / (1.0 - rate)).ln();
    }
    // regression is fit on standardized targets; the affine map is attached after training
    let (out_center, out_scale, std_targets) = match objective {
        Objective::Bernoulli => (0.0, 1.0, None),
        Objective::SquaredError => {
            let var = targets.iter().map(|t| (t - mean_t).powi(2)).sum::<f64>() / n as f64;
            let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            (mean_t, sd, Some(targets.iter().map(|t| (t - mean_t) / sd).collect::<Vec<f64>>()))
        }
    };
    let targets = std_targets.as_deref().unwrap_or(targets);
    if let WeightBound::L1(b) = config.weight_bound {
        project_network(&mut net, b);
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut ws = Workspace::new(&net);
    let mut grads = Gradients::zeros_like(&net);
    let lr = config.learning_rate;
    let batch_size = config.batch_size.min(n);
    let mut trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch_size) {
            grads.clear();
            for &i in chunk {
                let x = &inputs[i * input_dim..(i + 1) * input_dim];
                let f = ws.forward(&net, x);
                let (_, g) = pointwise(&net, objective, f, targets[i]);
                ws.backward(&net, g, &mut grads);
            }
            let step = lr / chunk.len() as f64;
            for (layer, gl) in net.layers.iter_mut().zip(&grads.layers) {
                for (w, g) in layer.weights.iter_mut().zip(&gl.weights) {
                    *w -= step * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(&gl.bias) {
                    *b -= step * g;
                }
            }
            if let WeightBound::L1(b) = config.weight_bound {
                project_network(&mut net, b);
            }
        }
        let loss = full_objective(&net, &mut ws, inputs, targets, objective);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(loss);
    }
    net.training_loss_trace = trace;
    net.output_center = out_center;
    net.output_scale = out_scale;
    Ok(net)
}

fn full_objective(
    net: &FittedNetwork,
    ws: &mut Workspace,
    inputs: &[f64],
    targets: &[f64],
    objective: Objective,
) -> f64 {
    let p = net.input_dim;
    let total: f64 = inputs
        .chunks_exact(p)
        .zip(targets)
        .map(|(x, &t)| {
            let f = ws.forward(net, x);
            pointwise(net, objective, f, t).0
        })
        .sum();
    total / targets.len() as f64
}

/// Projects every unit's `[weights, bias]` onto the l1 ball of radius `bound`.
pub(crate) fn project_network(net: &mut FittedNetwork, bound: f64) {
    let mut unit = Vec::new();
    for layer in &mut net.layers {
        for j in 0..layer.outputs {
            let row = &mut layer.weights[j * layer.inputs..(j + 1) * layer.inputs];
            unit.clear();
            unit.extend_from_slice(row);
            unit.push(layer.bias[j]);
            project_l1_in_place(&mut unit, bound);
            row.copy_from_slice(&unit[..layer.inputs]);
            layer.bias[j] = unit[layer.inputs];
        }
    }
}

pub(crate) fn column_moments(inputs: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let n = inputs.len() / p;
    let mut mean = vec![0.0; p];
    for row in inputs.chunks_exact(p) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; p];
    for row in inputs.chunks_exact(p) {
        for k in 0..p {
            var[k] += (row[k] - mean[k]).powi(2);
        }
    }
    let scale = var
        .iter()
        .map(|v| {
            let sd = (v / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Logit-link network maximizing the Bernoulli log-likelihood of `I(D = d)` on all rows.
pub fn train_propensity(sample: &Sample, d: usize, config: &NetworkConfig) -> Result<FittedNetwork> {
    if sample.arm_count(d) == 0 {
        return Err(Error::EmptyArm(d));
    }
    let targets = sample.indicator(d);
    fit_network(sample.covariates(), &targets, sample.p(), Objective::Bernoulli, config)
}

/// Identity-link network minimizing squared error against `targets` on the rows with `D = d`.
pub fn train_regression(
    sample: &Sample,
    d: usize,
    targets: &[f64],
    config: &NetworkConfig,
) -> Result<FittedNetwork> {
    if targets.len() != sample.n() {
        return Err(Error::DimensionMismatch {
            expected: sample.n(),
            actual: targets.len(),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidConfig("regression targets must be finite".into()));
    }
    let idx = sample.arm_indices(d);
    if idx.is_empty() {
        return Err(Error::EmptyArm(d));
    }
    let (xs, ts) = gather(sample, &idx, targets);
    fit_network(&xs, &ts, sample.p(), Objective::SquaredError, config)
}

pub(crate) fn gather(sample: &Sample, idx: &[usize], targets: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = sample.p();
    let mut xs = Vec::with_capacity(idx.len() * p);
    let mut ts = Vec::with_capacity(idx.len());
    for &i in idx {
        xs.extend_from_slice(sample.x(i));
        ts.push(targets[i]);
    }
    (xs, ts)
}
