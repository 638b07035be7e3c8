//! 1-D convolution layer (cross-correlation, stride 1).

use super::activation::Activation;
use crate::error::{Error, Result};
use crate::tensor::{conv1d, Padding, Tensor};
use serde::{Deserialize, Serialize};

/// Cross-correlates each `[L, C]` sample with `F` kernels of length `K`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv1dLayer {
    /// `[K, C, F]`
    pub kernels: Tensor,
    /// `[F]`
    pub bias: Tensor,
    pub activation: Activation,
    pub padding: Padding,
    #[serde(skip)]
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    input: Tensor,
    preact: Tensor,
}

impl Conv1dLayer {
    pub fn new(kernels: Tensor, bias: Tensor, activation: Activation, padding: Padding) -> Self {
        Conv1dLayer {
            kernels,
            bias,
            activation,
            padding,
            cache: None,
        }
    }

    pub fn kernel_len(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn filters(&self) -> usize {
        self.kernels.shape()[2]
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        match self.padding {
            Padding::Valid => in_len - self.kernel_len() + 1,
            Padding::Same => in_len,
        }
    }

    fn pad_left(&self) -> isize {
        match self.padding {
            Padding::Valid => 0,
            Padding::Same => ((self.kernel_len() - 1) / 2) as isize,
        }
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 3 || input.shape()[2] != self.in_channels() {
            return Err(Error::shape(
                "conv1d forward",
                format!(
                    "expected [B, L, {}], got {:?}",
                    self.in_channels(),
                    input.shape()
                ),
            ));
        }
        let (batch, in_len) = (input.shape()[0], input.shape()[1]);
        let out_len = {
            if self.kernel_len() > in_len && self.padding == Padding::Valid {
                return Err(Error::KernelTooLong {
                    kernel: self.kernel_len(),
                    input: in_len,
                });
            }
            self.out_len(in_len)
        };
        let mut preact = Tensor::zeros(&[batch, out_len, self.filters()]);
        for b in 0..batch {
            let sample = input.index3(b);
            let out = conv1d(&sample, &self.kernels, &self.bias, self.padding)?;
            for t in 0..out_len {
                for f in 0..self.filters() {
                    preact.set3(b, t, f, out.at2(t, f));
                }
            }
        }
        let out = self.activation.apply(&preact);
        self.cache = Some(ConvCache {
            input: input.clone(),
            preact,
        });
        Ok(out)
    }

    /// Returns `(d_input, [d_kernels, d_bias])`.
    pub fn backward(&mut self, d_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let cache = self.cache.take().ok_or(Error::StaleCache)?;
        let d_preact = d_out.hadamard(&self.activation.grad(&cache.preact))?;

        let input = &cache.input;
        let (batch, in_len, channels) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (k_len, filters) = (self.kernel_len(), self.filters());
        let out_len = d_preact.shape()[1];
        let pad = self.pad_left();

        let mut d_kernels = Tensor::zeros(&[k_len, channels, filters]);
        let mut d_bias = Tensor::zeros(&[filters]);
        let mut d_input = Tensor::zeros(&[batch, in_len, channels]);
        for b in 0..batch {
            for t in 0..out_len {
                for f in 0..filters {
                    let g = d_preact.at3(b, t, f);
                    if g == 0.0 {
                        continue;
                    }
                    d_bias.data_mut()[f] += g;
                    for kk in 0..k_len {
                        let src = t as isize + kk as isize - pad;
                        if src < 0 || src >= in_len as isize {
                            continue;
                        }
                        let src = src as usize;
                        for c in 0..channels {
                            let dk = d_kernels.at3(kk, c, f) + input.at3(b, src, c) * g;
                            d_kernels.set3(kk, c, f, dk);
                            let dx = d_input.at3(b, src, c) + self.kernels.at3(kk, c, f) * g;
                            d_input.set3(b, src, c, dx);
                        }
                    }
                }
            }
        }
        Ok((d_input, vec![d_kernels, d_bias]))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
