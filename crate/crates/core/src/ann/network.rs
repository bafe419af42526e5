//! Feed-forward network class: one or more hidden layers, scalar output, optional logit link.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => logistic(z),
        }
    }

    /// Derivative given pre-activation `z` and activation `h`. ReLU uses 0 at `z = 0`.
    #[inline]
    pub fn derivative(self, z: f64, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => h * (1.0 - h),
        }
    }
}

/// Per-unit l1 bound on `[weights, bias]` of every layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBound {
    Unbounded,
    L1(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Logit,
    Identity,
}

/// Largest magnitude of the pre-link output fed to the logistic link. Keeps
/// logit-link outputs strictly inside `(0, 1)` in double precision.
pub const LOGIT_CLAMP: f64 = 30.0;

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Hidden-layer widths; a single entry is the one-hidden-layer sieve.
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub weight_bound: WeightBound,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            widths: vec![8],
            activation: Activation::Relu,
            weight_bound: WeightBound::Unbounded,
            learning_rate: 0.05,
            batch_size: 32,
            epochs: 100,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::InvalidConfig("widths must be nonempty and positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidConfig("batch_size and epochs must be positive".into()));
        }
        if let WeightBound::L1(b) = self.weight_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidConfig("weight bound must be positive".into()));
            }
        }
        Ok(())
    }

    /// Parameter count for input dimension `p`, biases included.
    pub fn parameter_count(&self, p: usize) -> usize {
        let mut fan_in = p;
        let mut total = 0;
        for &w in &self.widths {
            total += (fan_in + 1) * w;
            fan_in = w;
        }
        total + fan_in + 1
    }
}

/// Dense layer; `weights` is row-major `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn uniform_init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-s..=s)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.inputs..(j + 1) * self.inputs]
    }

    /// l1 norm of unit `j` including its bias.
    pub fn unit_l1(&self, j: usize) -> f64 {
        self.row(j).iter().map(|w| w.abs()).sum::<f64>() + self.bias[j].abs()
    }
}

/// Trained weights plus the affine input/output standardization applied around them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedNetwork {
    pub config: NetworkConfig,
    pub input_dim: usize,
    /// Hidden layers followed by the single-unit output layer.
    pub layers: Vec<Layer>,
    pub link: Link,
    pub input_center: Vec<f64>,
    pub input_scale: Vec<f64>,
    /// Identity link only: reported output is `center + scale * f(x)`.
    pub output_center: f64,
    pub output_scale: f64,
    pub training_loss_trace: Vec<f64>,
}

impl FittedNetwork {
    /// Network with all weights zero and identity standardization.
    pub fn zeros(config: NetworkConfig, input_dim: usize, link: Link) -> Self {
        let mut layers = Vec::with_capacity(config.widths.len() + 1);
        let mut fan_in = input_dim;
        for &w in &config.widths {
            layers.push(Layer::zeros(fan_in, w));
            fan_in = w;
        }
        layers.push(Layer::zeros(fan_in, 1));
        Self {
            config,
            input_dim,
            layers,
            link,
            input_center: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
            output_center: 0.0,
            output_scale: 1.0,
            training_loss_trace: Vec::new(),
        }
    }

    pub(crate) fn initialized(
        config: NetworkConfig,
        input_dim: usize,
        link: Link,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut net = Self::zeros(config, input_dim, link);
        let mut fan_in = input_dim;
        let widths = net.config.widths.clone();
        for (u, &w) in widths.iter().enumerate() {
            net.layers[u] = Layer::uniform_init(fan_in, w, rng);
            fan_in = w;
        }
        // Output layer starts at zero: the untrained net is the constant (base-rate or mean) fit.
        let last = net.layers.len() - 1;
        net.layers[last] = Layer::zeros(fan_in, 1);
        net
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn output_layer(&self) -> &Layer {
        self.layers.last().expect("output layer")
    }

    pub(crate) fn standardize_into(&self, x: &[f64], out: &mut [f64]) {
        for k in 0..self.input_dim {
            out[k] = (x[k] - self.input_center[k]) / self.input_scale[k];
        }
    }

    /// Pre-link scalar `f(x)` from already standardized inputs.
    pub(crate) fn raw_from_standardized(&self, xs: &[f64], buf: &mut Vec<f64>, next: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend_from_slice(xs);
        let act = self.config.activation;
        let hidden = self.layers.len() - 1;
        for layer in &self.layers[..hidden] {
            next.clear();
            for j in 0..layer.outputs {
                let z = layer.bias[j] + dot(layer.row(j), buf);
                next.push(act.apply(z));
            }
            std::mem::swap(buf, next);
        }
        let out = &self.layers[hidden];
        out.bias[0] + dot(out.row(0), buf)
    }

    /// Output after link (and output de-standardization for the identity link).
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut xs = vec![0.0; self.input_dim];
        self.standardize_into(x, &mut xs);
        let mut buf = Vec::new();
        let mut next = Vec::new();
        let f = self.raw_from_standardized(&xs, &mut buf, &mut next);
        self.apply_link(f)
    }

    #[inline]
    pub(crate) fn apply_link(&self, f: f64) -> f64 {
        match self.link {
            Link::Logit => logistic(f.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)),
            Link::Identity => self.output_center + self.output_scale * f,
        }
    }

    /// Outputs for every row of a row-major `(rows, input_dim)` buffer.
    pub fn predict_rows(&self, rows: &[f64]) -> Vec<f64> {
        let p = self.input_dim;
        let mut xs = vec![0.0; p];
        let mut buf = Vec::new();
        let mut next = Vec::new();
        rows.chunks_exact(p)
            .map(|x| {
                self.standardize_into(x, &mut xs);
                let f = self.raw_from_standardized(&xs, &mut buf, &mut next);
                self.apply_link(f)
            })
            .collect()
    }

    /// Largest per-unit l1 norm across all layers.
    pub fn max_unit_l1(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| (0..l.outputs).map(move |j| l.unit_l1(j)))
            .fold(0.0, f64::max)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
