//! Recurrent layers: a simple (Elman) RNN cell and an LSTM cell, unrolled
//! over the window and emitting only the final hidden state.

use super::activation::Activation;
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};
use serde::{Deserialize, Serialize};

/// `h_t = act(x_t W + h_{t-1} U + b)`, zero initial state, output `h_L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimpleRnnLayer {
    /// `[C, U]`
    pub input_weights: Tensor,
    /// `[U, U]`
    pub recurrent_weights: Tensor,
    /// `[U]`
    pub bias: Tensor,
    pub activation: Activation,
    #[serde(skip)]
    cache: Option<RnnCache>,
}

#[derive(Debug, Clone)]
struct RnnCache {
    /// `x_t` per step, `[B, C]` each.
    inputs: Vec<Tensor>,
    /// Pre-activations per step, `[B, U]` each.
    preacts: Vec<Tensor>,
    /// `h_0..h_L` (length steps + 1), `[B, U]` each.
    hiddens: Vec<Tensor>,
}

impl SimpleRnnLayer {
    pub fn new(input_weights: Tensor, recurrent_weights: Tensor, bias: Tensor, activation: Activation) -> Self {
        SimpleRnnLayer {
            input_weights,
            recurrent_weights,
            bias,
            activation,
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.input_weights.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.input_weights.shape()[1]
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 3 || input.shape()[2] != self.in_channels() {
            return Err(Error::shape(
                "simple_rnn forward",
                format!("expected [B, L, {}], got {:?}", self.in_channels(), input.shape()),
            ));
        }
        let (batch, steps) = (input.shape()[0], input.shape()[1]);
        let mut inputs = Vec::with_capacity(steps);
        let mut preacts = Vec::with_capacity(steps);
        let mut hiddens = Vec::with_capacity(steps + 1);
        hiddens.push(Tensor::zeros(&[batch, self.units()]));
        for t in 0..steps {
            let x_t = input.time_slice(t);
            let preact = x_t
                .matmul(&self.input_weights)?
                .add(&hiddens[t].matmul(&self.recurrent_weights)?)?
                .add_row(&self.bias)?;
            let h_t = self.activation.apply(&preact);
            inputs.push(x_t);
            preacts.push(preact);
            hiddens.push(h_t);
        }
        let output = hiddens[steps].clone();
        self.cache = Some(RnnCache {
            inputs,
            preacts,
            hiddens,
        });
        Ok(output)
    }

    /// Backpropagation through time over all cached steps.
    ///
    /// Returns `(d_input, [d_input_weights, d_recurrent_weights, d_bias])`.
    pub fn backward(&mut self, d_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let cache = self.cache.take().ok_or(Error::StaleCache)?;
        let steps = cache.inputs.len();
        let (batch, channels) = (cache.inputs[0].shape()[0], self.in_channels());

        let mut d_w = Tensor::zeros(self.input_weights.shape());
        let mut d_u = Tensor::zeros(self.recurrent_weights.shape());
        let mut d_b = Tensor::zeros(self.bias.shape());
        let mut d_input = Tensor::zeros(&[batch, steps, channels]);
        let mut d_h = d_out.clone();
        for t in (0..steps).rev() {
            let d_preact = d_h.hadamard(&self.activation.grad(&cache.preacts[t]))?;
            d_w = d_w.add(&cache.inputs[t].transpose()?.matmul(&d_preact)?)?;
            d_u = d_u.add(&cache.hiddens[t].transpose()?.matmul(&d_preact)?)?;
            d_b = d_b.add(&d_preact.sum_rows()?)?;
            let d_x = d_preact.matmul(&self.input_weights.transpose()?)?;
            for b in 0..batch {
                for c in 0..channels {
                    d_input.set3(b, t, c, d_x.at2(b, c));
                }
            }
            d_h = d_preact.matmul(&self.recurrent_weights.transpose()?)?;
        }
        Ok((d_input, vec![d_w, d_u, d_b]))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Gate order used for the LSTM parameter blocks.
pub const LSTM_GATES: [&str; 4] = ["input", "forget", "cell", "output"];
const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_G: usize = 2;
const GATE_O: usize = 3;

/// Standard LSTM cell:
/// `i, f, o = sigmoid(...)`, `g = tanh(...)`,
/// `c_t = f . c_{t-1} + i . g`, `h_t = o . tanh(c_t)`;
/// zero initial states, output `h_L`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmLayer {
    /// Per gate `[C, U]`, gate order (input, forget, cell, output).
    pub input_weights: [Tensor; 4],
    /// Per gate `[U, U]`.
    pub recurrent_weights: [Tensor; 4],
    /// Per gate `[U]`.
    pub biases: [Tensor; 4],
    #[serde(skip)]
    cache: Option<LstmCache>,
}

#[derive(Debug, Clone)]
struct LstmStep {
    input: Tensor,
    /// Post-activation gate values (i, f, g, o), `[B, U]` each.
    gates: [Tensor; 4],
    cell_prev: Tensor,
    cell: Tensor,
    hidden_prev: Tensor,
}

#[derive(Debug, Clone)]
struct LstmCache {
    steps: Vec<LstmStep>,
}

impl LstmLayer {
    pub fn new(input_weights: [Tensor; 4], recurrent_weights: [Tensor; 4], biases: [Tensor; 4]) -> Self {
        LstmLayer {
            input_weights,
            recurrent_weights,
            biases,
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.input_weights[0].shape()[0]
    }

    pub fn units(&self) -> usize {
        self.input_weights[0].shape()[1]
    }

    fn gate_preact(&self, gate: usize, x_t: &Tensor, h_prev: &Tensor) -> Result<Tensor> {
        x_t.matmul(&self.input_weights[gate])?
            .add(&h_prev.matmul(&self.recurrent_weights[gate])?)?
            .add_row(&self.biases[gate])
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        if input.rank() != 3 || input.shape()[2] != self.in_channels() {
            return Err(Error::shape(
                "lstm forward",
                format!("expected [B, L, {}], got {:?}", self.in_channels(), input.shape()),
            ));
        }
        let (batch, steps) = (input.shape()[0], input.shape()[1]);
        let mut h = Tensor::zeros(&[batch, self.units()]);
        let mut c = Tensor::zeros(&[batch, self.units()]);
        let mut trace = Vec::with_capacity(steps);
        for t in 0..steps {
            let x_t = input.time_slice(t);
            let i = tensor::sigmoid(&self.gate_preact(GATE_I, &x_t, &h)?);
            let f = tensor::sigmoid(&self.gate_preact(GATE_F, &x_t, &h)?);
            let g = tensor::tanh(&self.gate_preact(GATE_G, &x_t, &h)?);
            let o = tensor::sigmoid(&self.gate_preact(GATE_O, &x_t, &h)?);
            let c_next = f.hadamard(&c)?.add(&i.hadamard(&g)?)?;
            let h_next = o.hadamard(&tensor::tanh(&c_next))?;
            trace.push(LstmStep {
                input: x_t,
                gates: [i, f, g, o],
                cell_prev: c,
                cell: c_next.clone(),
                hidden_prev: h,
            });
            c = c_next;
            h = h_next;
        }
        self.cache = Some(LstmCache { steps: trace });
        Ok(h)
    }

    /// Backpropagation through time.
    ///
    /// Returns `(d_input, grads)` with grads ordered gate-major like
    /// [`LstmLayer::param_order`]: for each gate (i, f, g, o) its input
    /// weights, recurrent weights, then bias.
    pub fn backward(&mut self, d_out: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let cache = self.cache.take().ok_or(Error::StaleCache)?;
        let steps = cache.steps.len();
        let (batch, channels) = (cache.steps[0].input.shape()[0], self.in_channels());

        let mut d_w = [0, 1, 2, 3].map(|g| Tensor::zeros(self.input_weights[g].shape()));
        let mut d_u = [0, 1, 2, 3].map(|g| Tensor::zeros(self.recurrent_weights[g].shape()));
        let mut d_b = [0, 1, 2, 3].map(|g| Tensor::zeros(self.biases[g].shape()));
        let mut d_input = Tensor::zeros(&[batch, steps, channels]);

        let mut d_h = d_out.clone();
        let mut d_c = Tensor::zeros(d_out.shape());
        for t in (0..steps).rev() {
            let step = &cache.steps[t];
            let [i, f, g, o] = &step.gates;
            let tanh_c = tensor::tanh(&step.cell);

            let d_o = d_h.hadamard(&tanh_c)?;
            d_c = d_c.add(&d_h.hadamard(o)?.hadamard(&tanh_c.map(|v| 1.0 - v * v))?)?;
            let d_i = d_c.hadamard(g)?;
            let d_f = d_c.hadamard(&step.cell_prev)?;
            let d_g = d_c.hadamard(i)?;

            // derivative through the gate nonlinearity, evaluated at the
            // cached post-activation values
            let d_z = [
                d_i.hadamard(&i.map(|v| v * (1.0 - v)))?,
                d_f.hadamard(&f.map(|v| v * (1.0 - v)))?,
                d_g.hadamard(&g.map(|v| 1.0 - v * v))?,
                d_o.hadamard(&o.map(|v| v * (1.0 - v)))?,
            ];

            let mut d_h_prev = Tensor::zeros(d_h.shape());
            let mut d_x = Tensor::zeros(&[batch, channels]);
            for gate in 0..4 {
                d_w[gate] = d_w[gate].add(&step.input.transpose()?.matmul(&d_z[gate])?)?;
                d_u[gate] = d_u[gate].add(&step.hidden_prev.transpose()?.matmul(&d_z[gate])?)?;
                d_b[gate] = d_b[gate].add(&d_z[gate].sum_rows()?)?;
                d_h_prev = d_h_prev.add(&d_z[gate].matmul(&self.recurrent_weights[gate].transpose()?)?)?;
                d_x = d_x.add(&d_z[gate].matmul(&self.input_weights[gate].transpose()?)?)?;
            }
            for b in 0..batch {
                for c in 0..channels {
                    d_input.set3(b, t, c, d_x.at2(b, c));
                }
            }
            d_h = d_h_prev;
            d_c = d_c.hadamard(f)?;
        }

        let mut grads = Vec::with_capacity(12);
        for gate in 0..4 {
            grads.push(d_w[gate].clone());
            grads.push(d_u[gate].clone());
            grads.push(d_b[gate].clone());
        }
        Ok((d_input, grads))
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
