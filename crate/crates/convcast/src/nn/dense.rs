//! Fully connected layer.

use super::activation::Activation;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

/// `y = act(x W + b)` over a `[B, in]` batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[in, units]`
    pub weights: Tensor,
    /// `[units]`
    pub bias: Tensor,
    pub activation: Activation,
    #[serde(skip)]
    cache: Option<DenseCache>,
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Tensor,
    preact: Tensor,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Self {
        DenseLayer {
            weights,
            bias,
            activation,
            cache: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 2 || input.shape()[1] != self.input_dim() {
            return Err(Error::shape(
                "dense forward",
                format!("expected [B, {}], got {:?}", self.input_dim(), input.shape()),
            ));
        }
        let preact = input.matmul(&self.weights)?.add_row(&self.bias)?;
        let out = self.activation.apply(&preact);
        self.cache = Some(DenseCache {
            input: input.clone(),
            preact,
        });
        Ok(out)
    }

    /// Returns `(d_input, [d_weights, d_bias])`.
    pub fn backward(&mut self, d_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let cache = self.cache.take().ok_or(Error::StaleCache)?;
        let d_preact = d_out.hadamard(&self.activation.grad(&cache.preact))?;
        let d_weights = cache.input.transpose()?.matmul(&d_preact)?;
        let d_bias = d_preact.sum_rows()?;
        let d_input = d_preact.matmul(&self.weights.transpose()?)?;
        Ok((d_input, vec![d_weights, d_bias]))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
