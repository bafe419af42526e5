//! Exact gradients of the batch training objectives.

use serde::{Deserialize, Serialize};

use super::network::{dot, logistic, FittedNetwork, Layer};

/// Per-observation training criterion, averaged over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Negative Bernoulli log-likelihood with the pre-link output as the logit.
    Bernoulli,
    /// `(t - g(x))^2 / 2` on the identity-link output.
    SquaredError,
}

/// Row-major raw inputs with one target per row.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub targets: &'a [f64],
}

/// Gradient with the same shape as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &FittedNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub(crate) fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub(crate) fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= c);
            l.bias.iter_mut().for_each(|b| *b *= c);
        }
    }

    /// Flattened in layer order, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

#[inline]
fn softplus(f: f64) -> f64 {
    if f > 0.0 {
        f + (-f).exp().ln_1p()
    } else {
        f.exp().ln_1p()
    }
}

/// Loss and `d loss / d f` for one observation.
#[inline]
pub(crate) fn pointwise(net: &FittedNetwork, objective: Objective, f: f64, t: f64) -> (f64, f64) {
    match objective {
        Objective::Bernoulli => (softplus(f) - t * f, logistic(f) - t),
        Objective::SquaredError => {
            let out = net.output_center + net.output_scale * f;
            let r = out - t;
            (0.5 * r * r, net.output_scale * r)
        }
    }
}

/// Reusable buffers for forward/backward passes.
pub(crate) struct Workspace {
    xs: Vec<f64>,
    zs: Vec<Vec<f64>>,
    hs: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn new(net: &FittedNetwork) -> Self {
        let hidden = net.layers.len() - 1;
        Self {
            xs: vec![0.0; net.input_dim],
            zs: net.layers[..hidden].iter().map(|l| vec![0.0; l.outputs]).collect(),
            hs: net.layers[..hidden].iter().map(|l| vec![0.0; l.outputs]).collect(),
            deltas: net.layers[..hidden].iter().map(|l| vec![0.0; l.outputs]).collect(),
        }
    }

    /// Forward pass from raw inputs, caching every layer; returns the pre-link output.
    pub(crate) fn forward(&mut self, net: &FittedNetwork, x: &[f64]) -> f64 {
        net.standardize_into(x, &mut self.xs);
        let act = net.config.activation;
        let hidden = net.layers.len() - 1;
        for u in 0..hidden {
            let layer = &net.layers[u];
            let (prev_hs, rest) = self.hs.split_at_mut(u);
            let input: &[f64] = if u == 0 { &self.xs } else { &prev_hs[u - 1] };
            let z = &mut self.zs[u];
            let h = &mut rest[0];
            for j in 0..layer.outputs {
                z[j] = layer.bias[j] + dot(layer.row(j), input);
                h[j] = act.apply(z[j]);
            }
        }
        let out = &net.layers[hidden];
        let last: &[f64] = if hidden == 0 { &self.xs } else { &self.hs[hidden - 1] };
        out.bias[0] + dot(out.row(0), last)
    }

    /// Adds the gradient of one observation's loss (with `d loss / d f = g`) to `grads`.
    pub(crate) fn backward(&mut self, net: &FittedNetwork, g: f64, grads: &mut Gradients) {
        let act = net.config.activation;
        let hidden = net.layers.len() - 1;
        {
            let out = &net.layers[hidden];
            let gl = &mut grads.layers[hidden];
            let last: &[f64] = if hidden == 0 { &self.xs } else { &self.hs[hidden - 1] };
            for (gw, h) in gl.weights.iter_mut().zip(last) {
                *gw += g * h;
            }
            gl.bias[0] += g;
            if hidden == 0 {
                return;
            }
            let delta = &mut self.deltas[hidden - 1];
            for k in 0..out.inputs {
                let zk = self.zs[hidden - 1][k];
                let hk = self.hs[hidden - 1][k];
                delta[k] = g * out.weights[k] * act.derivative(zk, hk);
            }
        }
        for u in (0..hidden).rev() {
            let layer = &net.layers[u];
            let (lower, upper) = self.deltas.split_at_mut(u);
            let delta = &upper[0];
            let input: &[f64] = if u == 0 { &self.xs } else { &self.hs[u - 1] };
            let gl = &mut grads.layers[u];
            for j in 0..layer.outputs {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                let row = &mut gl.weights[j * layer.inputs..(j + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += dj * x;
                }
                gl.bias[j] += dj;
            }
            if u > 0 {
                let below = &mut lower[u - 1];
                for k in 0..layer.inputs {
                    let mut acc = 0.0;
                    for j in 0..layer.outputs {
                        acc += delta[j] * layer.weights[j * layer.inputs + k];
                    }
                    below[k] = acc * act.derivative(self.zs[u - 1][k], self.hs[u - 1][k]);
                }
            }
        }
    }
}

/// Mean batch objective.
pub fn objective_value(net: &FittedNetwork, batch: Batch<'_>, objective: Objective) -> f64 {
    let p = net.input_dim;
    let mut ws = Workspace::new(net);
    let m = batch.targets.len();
    let total: f64 = batch
        .inputs
        .chunks_exact(p)
        .zip(batch.targets)
        .map(|(x, &t)| {
            let f = ws.forward(net, x);
            pointwise(net, objective, f, t).0
        })
        .sum();
    total / m as f64
}

/// Analytic gradient of [`objective_value`] with respect to every weight and bias.
pub fn backprop_gradient(net: &FittedNetwork, batch: Batch<'_>, objective: Objective) -> Gradients {
    let p = net.input_dim;
    let m = batch.targets.len();
    assert!(m > 0, "empty batch");
    assert_eq!(batch.inputs.len(), m * p, "batch shape");
    let mut ws = Workspace::new(net);
    let mut grads = Gradients::zeros_like(net);
    for (x, &t) in batch.inputs.chunks_exact(p).zip(batch.targets) {
        let f = ws.forward(net, x);
        let (_, g) = pointwise(net, objective, f, t);
        ws.backward(net, g, &mut grads);
    }
    grads.scale(1.0 / m as f64);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ann::network::{Activation, Link, NetworkConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_residual_squared_error_has_zero_gradient() {
        let cfg = NetworkConfig {
            widths: vec![4],
            ..NetworkConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = FittedNetwork::initialized(cfg, 2, Link::Identity, &mut rng);
        let inputs: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets = net.predict_rows(&inputs);
        let g = backprop_gradient(&net, Batch { inputs: &inputs, targets: &targets }, Objective::SquaredError);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn sigmoid_hidden_layer_matches_finite_differences() {
        let cfg = NetworkConfig {
            widths: vec![3],
            activation: Activation::Sigmoid,
            ..NetworkConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = FittedNetwork::initialized(cfg, 2, Link::Identity, &mut rng);
        net.layers[0].bias = vec![0.1, -0.2, 0.3];
        let inputs: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = Batch { inputs: &inputs, targets: &targets };
        let g = backprop_gradient(&net, batch, Objective::SquaredError).flatten();
        let h = 1e-6;
        let mut idx = 0;
        for li in 0..net.layers.len() {
            let nw = net.layers[li].weights.len();
            let nb = net.layers[li].bias.len();
            for k in 0..nw + nb {
                let mut plus = net.clone();
                let mut minus = net.clone();
                if k < nw {
                    plus.layers[li].weights[k] += h;
                    minus.layers[li].weights[k] -= h;
                } else {
                    plus.layers[li].bias[k - nw] += h;
                    minus.layers[li].bias[k - nw] -= h;
                }
                let fd = (objective_value(&plus, batch, Objective::SquaredError)
                    - objective_value(&minus, batch, Objective::SquaredError))
                    / (2.0 * h);
                assert!((fd - g[idx]).abs() < 1e-7, "param {idx}: fd {fd} vs {}", g[idx]);
                idx += 1;
            }
        }
    }
}
