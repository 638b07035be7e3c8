//! Layer activation functions.

use crate::tensor::{self, Tensor};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply(&self, preact: &Tensor) -> Tensor {
        match self {
            Activation::Relu => tensor::relu(preact),
            Activation::Tanh => tensor::tanh(preact),
            Activation::Sigmoid => tensor::sigmoid(preact),
            Activation::Linear => preact.clone(),
        }
    }

    /// Derivative evaluated at the pre-activation.
    pub fn grad(&self, preact: &Tensor) -> Tensor {
        match self {
            Activation::Relu => tensor::relu_grad(preact),
            Activation::Tanh => tensor::tanh_grad(preact),
            Activation::Sigmoid => tensor::sigmoid_grad(preact),
            Activation::Linear => Tensor::filled(preact.shape(), 1.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }
}
