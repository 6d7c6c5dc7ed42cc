use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HORIZON: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::InvalidInput(format!("unknown activation `{other}`"))),
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Architecture and optimizer settings of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Width of each hidden layer; the layer count is its length.
    pub layer_sizes: Vec<usize>,
    pub lookback: usize,
    pub horizon: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Hyperparameters {
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(Error::InvalidInput("hidden layer sizes must be non-empty and positive".into()));
        }
        if self.lookback == 0 || self.horizon == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("lookback, horizon and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidInput(format!("learning rate {} is not positive", self.learning_rate)));
        }
        Ok(())
    }

    /// Hidden sizes joined with `-`, e.g. `512-128`.
    pub fn layers_label(&self) -> String {
        self.layer_sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("-")
    }
}

/// A dense layer computing `x·Wᵀ + b`; `weights` is `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Feed-forward network: activated hidden layers, affine output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub hyper: Hyperparameters,
}

/// Per-layer gradients, same shapes as the model's layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter());
        out.extend(l.bias.iter());
    }
    out
}

impl Mlp {
    /// Seeded He-style uniform initialization, zero biases.
    pub fn new(hyper: Hyperparameters, activation: Activation, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![hyper.lookback];
        dims.extend(&hyper.layer_sizes);
        dims.push(hyper.horizon);
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / w[0] as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_simple_fn((w[1], w[0]), || {
                        rng.random_range(-limit..limit)
                    }),
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            activation,
            hyper,
        })
    }

    /// Model with explicit layers; shapes must chain from `lookback` to `horizon`.
    pub fn from_layers(hyper: Hyperparameters, activation: Activation, layers: Vec<Layer>) -> Result<Self> {
        hyper.validate()?;
        let mut dims = vec![hyper.lookback];
        dims.extend(&hyper.layer_sizes);
        dims.push(hyper.horizon);
        if layers.len() != dims.len() - 1 {
            return Err(Error::Dimension {
                expected: dims.len() - 1,
                actual: layers.len(),
            });
        }
        for (l, w) in layers.iter().zip(dims.windows(2)) {
            if l.inputs() != w[0] || l.outputs() != w[1] || l.bias.len() != w[1] {
                return Err(Error::ModelFormat(format!(
                    "layer shape ({}, {}) does not match expected ({}, {})",
                    l.outputs(),
                    l.inputs(),
                    w[1],
                    w[0]
                )));
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("model parameter".into()));
            }
        }
        Ok(Mlp {
            layers,
            activation,
            hyper,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hyper.lookback
    }

    pub fn output_dim(&self) -> usize {
        self.hyper.horizon
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer: weights row-major, then biases.
    pub fn parameters(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Dimension {
                expected: self.parameter_count(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| *p = *it.next().unwrap());
        }
        Ok(())
    }

    fn check_inputs(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: cols,
            });
        }
        Ok(())
    }

    /// Forecast for one window.
    pub fn forward(&self, window: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_inputs(window.len())?;
        let batch = window.insert_axis(Axis(0));
        Ok(self.predict(batch)?.row(0).to_owned())
    }

    /// Forecasts for a batch of windows, one per row.
    pub fn predict(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_inputs(inputs.ncols())?;
        let last = self.layers.len() - 1;
        let mut x = inputs.to_owned();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = x.dot(&l.weights.t()) + &l.bias;
            if k < last {
                let f = self.activation;
                z.mapv_inplace(|v| f.apply(v));
            }
            x = z;
        }
        Ok(x)
    }

    /// Mean squared error over every output of the batch.
    pub fn loss(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
        let out = self.predict(inputs)?;
        if out.dim() != targets.dim() {
            return Err(Error::Dimension {
                expected: out.len(),
                actual: targets.len(),
            });
        }
        let diff = &out - &targets;
        Ok(diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64)
    }

    /// Loss and exact gradients of the mean squared error by backpropagation.
    pub fn gradients(&self, inputs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(Gradients, f64)> {
        self.check_inputs(inputs.ncols())?;
        if inputs.nrows() == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        if targets.nrows() != inputs.nrows() || targets.ncols() != self.output_dim() {
            return Err(Error::Dimension {
                expected: inputs.nrows() * self.output_dim(),
                actual: targets.len(),
            });
        }
        let last = self.layers.len() - 1;
        // activations[k] is the input to layer k; pre[k] its pre-activation
        let mut activations: Vec<Array2<f64>> = vec![inputs.to_owned()];
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            let z = activations[k].dot(&l.weights.t()) + &l.bias;
            let a = if k < last {
                let f = self.activation;
                z.mapv(|v| f.apply(v))
            } else {
                z.clone()
            };
            pre.push(z);
            activations.push(a);
        }

        let output = &activations[last + 1];
        let n = output.len() as f64;
        let diff = output - &targets;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }

        let mut delta = diff * (2.0 / n);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&activations[k]);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weights);
                let f = self.activation;
                ndarray::Zip::from(&mut back)
                    .and(&pre[k - 1])
                    .and(&activations[k])
                    .for_each(|g, &z, &a| *g *= f.derivative(z, a));
                delta = back;
            }
            grads.push(Layer {
                weights: gw,
                bias: gb,
            });
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, loss))
    }
}
