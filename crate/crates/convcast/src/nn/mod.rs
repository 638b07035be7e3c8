//! The neural-network engine: a layer zoo (Dense, Conv1D, Flatten,
//! SimpleRNN, LSTM) with hand-derived backward passes, Glorot-uniform
//! initialization, MSE loss, and lossless weight serialization.
//!
//! There is no autodiff graph: each layer computes its own exact gradients
//! and [`Model::backward`] stitches them together in reverse order.

pub mod activation;
pub mod check;
pub mod conv;
pub mod dense;
pub mod recurrent;

pub use activation::Activation;
pub use conv::Conv1dLayer;
pub use dense::DenseLayer;
pub use recurrent::{LstmLayer, SimpleRnnLayer};

use crate::error::{Error, Result};
use crate::tensor::{Padding, Tensor};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Declarative description of one layer; parameter shapes are resolved from
/// the input shape when the model is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { units: usize, activation: Activation },
    Conv1d { filters: usize, kernel_len: usize, activation: Activation, padding: Padding },
    Flatten,
    SimpleRnn { units: usize, activation: Activation },
    Lstm { units: usize },
}

/// Shape of the per-sample value flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureShape {
    /// `[len, channels]` sequence.
    Seq { len: usize, channels: usize },
    /// Flat `[dim]` vector.
    Flat { dim: usize },
}

impl LayerSpec {
    /// Output shape for a given input shape, or an error if the layer cannot
    /// accept it.
    pub fn output_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        match (*self, input) {
            (LayerSpec::Dense { units, .. }, FeatureShape::Flat { .. }) => Ok(FeatureShape::Flat { dim: units }),
            (LayerSpec::Conv1d { filters, kernel_len, padding, .. }, FeatureShape::Seq { len, channels: _ }) => {
                let out_len = match padding {
                    Padding::Valid => {
                        if kernel_len > len {
                            return Err(Error::KernelTooLong { kernel: kernel_len, input: len });
                        }
                        len - kernel_len + 1
                    }
                    Padding::Same => len,
                };
                Ok(FeatureShape::Seq { len: out_len, channels: filters })
            }
            (LayerSpec::Flatten, FeatureShape::Seq { len, channels }) => {
                Ok(FeatureShape::Flat { dim: len * channels })
            }
            (LayerSpec::SimpleRnn { units, .. }, FeatureShape::Seq { .. })
            | (LayerSpec::Lstm { units }, FeatureShape::Seq { .. }) => Ok(FeatureShape::Flat { dim: units }),
            (spec, shape) => Err(Error::shape(
                "layer algebra",
                format!("{spec:?} cannot take input {shape:?}"),
            )),
        }
    }
}

/// Flatten a `[B, L, C]` batch to `[B, L*C]` (day-major, matching the
/// row-major buffer) and reshape gradients back.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FlattenLayer {
    #[serde(skip)]
    cache: Option<Vec<usize>>,
}

impl FlattenLayer {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 3 {
            return Err(Error::shape(
                "flatten forward",
                format!("expected [B, L, C], got {:?}", input.shape()),
            ));
        }
        let shape = input.shape().to_vec();
        self.cache = Some(shape.clone());
        input.reshape(&[shape[0], shape[1] * shape[2]])
    }

    pub fn backward(&mut self, d_out: &Tensor) -> Result<Tensor> {
        let shape = self.cache.take().ok_or(Error::StaleCache)?;
        d_out.reshape(&shape)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// A parameterized layer instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense(DenseLayer),
    Conv1d(Conv1dLayer),
    Flatten(FlattenLayer),
    SimpleRnn(SimpleRnnLayer),
    Lstm(LstmLayer),
}

impl Layer {
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Dense(l) => l.forward(input),
            Layer::Conv1d(l) => l.forward(input),
            Layer::Flatten(l) => l.forward(input),
            Layer::SimpleRnn(l) => l.forward(input),
            Layer::Lstm(l) => l.forward(input),
        }
    }

    pub fn backward(&mut self, d_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        match self {
            Layer::Dense(l) => l.backward(d_out),
            Layer::Conv1d(l) => l.backward(d_out),
            Layer::Flatten(l) => Ok((l.backward(d_out)?, Vec::new())),
            Layer::SimpleRnn(l) => l.backward(d_out),
            Layer::Lstm(l) => l.backward(d_out),
        }
    }

    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Dense(l) => vec![&l.weights, &l.bias],
            Layer::Conv1d(l) => vec![&l.kernels, &l.bias],
            Layer::Flatten(_) => Vec::new(),
            Layer::SimpleRnn(l) => vec![&l.input_weights, &l.recurrent_weights, &l.bias],
            Layer::Lstm(l) => {
                let mut out = Vec::with_capacity(12);
                for gate in 0..4 {
                    out.push(&l.input_weights[gate]);
                    out.push(&l.recurrent_weights[gate]);
                    out.push(&l.biases[gate]);
                }
                out
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Dense(l) => vec![&mut l.weights, &mut l.bias],
            Layer::Conv1d(l) => vec![&mut l.kernels, &mut l.bias],
            Layer::Flatten(_) => Vec::new(),
            Layer::SimpleRnn(l) => vec![&mut l.input_weights, &mut l.recurrent_weights, &mut l.bias],
            Layer::Lstm(l) => {
                let mut out: Vec<&mut Tensor> = Vec::with_capacity(12);
                let (w, u, b) = (&mut l.input_weights, &mut l.recurrent_weights, &mut l.biases);
                for ((wi, ui), bi) in w.iter_mut().zip(u.iter_mut()).zip(b.iter_mut()) {
                    out.push(wi);
                    out.push(ui);
                    out.push(bi);
                }
                out
            }
        }
    }

    /// Stable names for the layer's parameters, aligned with [`Layer::params`].
    pub fn param_names(&self) -> Vec<String> {
        match self {
            Layer::Dense(_) => vec!["weights".into(), "bias".into()],
            Layer::Conv1d(_) => vec!["kernels".into(), "bias".into()],
            Layer::Flatten(_) => Vec::new(),
            Layer::SimpleRnn(_) => vec![
                "input_weights".into(),
                "recurrent_weights".into(),
                "bias".into(),
            ],
            Layer::Lstm(_) => recurrent::LSTM_GATES
                .iter()
                .flat_map(|g| {
                    [
                        format!("{g}_input_weights"),
                        format!("{g}_recurrent_weights"),
                        format!("{g}_bias"),
                    ]
                })
                .collect(),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Dense(l) => l.clear_cache(),
            Layer::Conv1d(l) => l.clear_cache(),
            Layer::Flatten(l) => l.clear_cache(),
            Layer::SimpleRnn(l) => l.clear_cache(),
            Layer::Lstm(l) => l.clear_cache(),
        }
    }
}

/// Glorot-uniform draw: `U(-limit, limit)` with `limit = sqrt(6 / (fan_in + fan_out))`.
fn glorot(rng: &mut ChaCha12Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor::new(shape, data).expect("shape/product agree")
}

/// An instantiated layer stack mapping a `[B, input_len, input_channels]`
/// batch to a `[B, 1]` prediction (all stock architectures end in Dense(1)).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Model {
    input_len: usize,
    input_channels: usize,
    seed: u64,
    layers: Vec<Layer>,
}

impl Model {
    /// Build and initialize a model. Weights are Glorot-uniform, biases zero,
    /// and the draw sequence (layers in order, parameters in declaration
    /// order, elements row-major) is fully determined by `seed`.
    pub fn new(input_len: usize, input_channels: usize, specs: &[LayerSpec], seed: u64) -> Result<Model> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut shape = FeatureShape::Seq {
            len: input_len,
            channels: input_channels,
        };
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let next = spec.output_shape(shape)?;
            let layer = match (*spec, shape) {
                (LayerSpec::Dense { units, activation }, FeatureShape::Flat { dim }) => {
                    let weights = glorot(&mut rng, &[dim, units], dim, units);
                    Layer::Dense(DenseLayer::new(weights, Tensor::zeros(&[units]), activation))
                }
                (LayerSpec::Conv1d { filters, kernel_len, activation, padding }, FeatureShape::Seq { channels, .. }) => {
                    let kernels = glorot(
                        &mut rng,
                        &[kernel_len, channels, filters],
                        kernel_len * channels,
                        kernel_len * filters,
                    );
                    Layer::Conv1d(Conv1dLayer::new(kernels, Tensor::zeros(&[filters]), activation, padding))
                }
                (LayerSpec::Flatten, _) => Layer::Flatten(FlattenLayer::default()),
                (LayerSpec::SimpleRnn { units, activation }, FeatureShape::Seq { channels, .. }) => {
                    let w = glorot(&mut rng, &[channels, units], channels, units);
                    let u = glorot(&mut rng, &[units, units], units, units);
                    Layer::SimpleRnn(SimpleRnnLayer::new(w, u, Tensor::zeros(&[units]), activation))
                }
                (LayerSpec::Lstm { units }, FeatureShape::Seq { channels, .. }) => {
                    let mut w = Vec::with_capacity(4);
                    let mut u = Vec::with_capacity(4);
                    for _ in 0..4 {
                        w.push(glorot(&mut rng, &[channels, units], channels, units));
                        u.push(glorot(&mut rng, &[units, units], units, units));
                    }
                    let b = [0; 4].map(|_| Tensor::zeros(&[units]));
                    Layer::Lstm(LstmLayer::new(
                        w.try_into().expect("four gates"),
                        u.try_into().expect("four gates"),
                        b,
                    ))
                }
                (spec, shape) => {
                    return Err(Error::shape(
                        "model builder",
                        format!("{spec:?} cannot take input {shape:?}"),
                    ))
                }
            };
            layers.push(layer);
            shape = next;
        }
        Ok(Model {
            input_len,
            input_channels,
            seed,
            layers,
        })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.input_len, self.input_channels)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Per-sample scalar predictions for a scaled `[B, L, C]` batch; forward
    /// activations are cached for a subsequent [`Model::backward`].
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor> {
        if batch.rank() != 3 || batch.shape()[1] != self.input_len || batch.shape()[2] != self.input_channels {
            return Err(Error::shape(
                "model forward",
                format!(
                    "expected [B, {}, {}], got {:?}",
                    self.input_len,
                    self.input_channels,
                    batch.shape()
                ),
            ));
        }
        let mut value = batch.clone();
        for layer in &mut self.layers {
            value = layer.forward(&value)?;
        }
        debug_assert!(value.is_all_finite(), "non-finite forward output");
        Ok(value)
    }

    /// Exact gradients of the loss w.r.t. every parameter, given the loss
    /// gradient w.r.t. the predictions of the latest [`Model::forward`].
    /// Gradient tensors align with [`Model::params`].
    pub fn backward(&mut self, d_pred: &Tensor) -> Result<Vec<Tensor>> {
        let mut grads_rev: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        let mut d_value = d_pred.clone();
        for layer in self.layers.iter_mut().rev() {
            let (d_input, grads) = layer.backward(&d_value)?;
            grads_rev.push(grads);
            d_value = d_input;
        }
        grads_rev.reverse();
        Ok(grads_rev.into_iter().flatten().collect())
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn count_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn all_params_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_all_finite())
    }

    pub fn clear_caches(&mut self) {
        for layer in &mut self.layers {
            layer.clear_cache();
        }
    }

    /// Serialize structure and weights to a versioned JSON document.
    /// f64 values use the shortest round-trip representation, so
    /// save -> load is lossless.
    pub fn to_json(&self) -> Result<String> {
        let doc = WeightsDoc {
            format_version: WEIGHTS_FORMAT_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let doc: WeightsDoc = serde_json::from_str(text)?;
        if doc.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported weights format version {}",
                doc.format_version
            )));
        }
        let mut model = doc.model;
        model.clear_caches();
        Ok(model)
    }
}

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct WeightsDoc {
    format_version: u32,
    model: Model,
}

/// Mean squared error over the batch and its gradient w.r.t. the predictions:
/// `loss = mean_b (pred - target)^2`, `d_pred = 2 (pred - target) / B`.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(
            "mse_loss",
            format!("{:?} vs {:?}", pred.shape(), target.shape()),
        ));
    }
    let diff = pred.sub(target)?;
    let batch = pred.shape()[0] as f64;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / batch;
    let grad = diff.scale(2.0 / batch);
    Ok((loss, grad))
}
