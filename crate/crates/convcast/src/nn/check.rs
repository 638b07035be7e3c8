//! Finite-difference gradient checking.
//!
//! Numerical gradients are computed from forward passes and the MSE loss
//! alone, so they are an independent check on every hand-derived backward
//! pass. Central differences: `(loss(p + eps) - loss(p - eps)) / (2 eps)`.

use super::{mse_loss, Model};
use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Floor for the relative-error denominator. Exactly-zero gradients (dead
/// ReLU paths) would otherwise compare finite-difference noise against zero.
pub const REL_ERR_FLOOR: f64 = 1e-4;

/// `|a - n| / max(|a| + |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(REL_ERR_FLOOR)
}

fn loss_of(model: &mut Model, x: &Tensor, y: &Tensor) -> Result<f64> {
    let pred = model.forward(x)?;
    Ok(mse_loss(&pred, y)?.0)
}

/// Central-difference gradients of the MSE loss w.r.t. every parameter,
/// aligned with [`Model::params`].
pub fn numerical_gradients(model: &mut Model, x: &Tensor, y: &Tensor, epsilon: f64) -> Result<Vec<Tensor>> {
    let param_shapes: Vec<Vec<usize>> = model.params().iter().map(|p| p.shape().to_vec()).collect();
    let mut grads = Vec::with_capacity(param_shapes.len());
    for (pi, shape) in param_shapes.iter().enumerate() {
        let mut grad = Tensor::zeros(shape);
        for e in 0..grad.len() {
            let original = model.params()[pi].data()[e];
            model.params_mut()[pi].data_mut()[e] = original + epsilon;
            let loss_plus = loss_of(model, x, y)?;
            model.params_mut()[pi].data_mut()[e] = original - epsilon;
            let loss_minus = loss_of(model, x, y)?;
            model.params_mut()[pi].data_mut()[e] = original;
            grad.data_mut()[e] = (loss_plus - loss_minus) / (2.0 * epsilon);
        }
        grads.push(grad);
    }
    Ok(grads)
}

/// Outcome of one analytic-vs-numeric comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, element index) of the worst mismatch.
    pub worst: (usize, usize),
    pub params_checked: usize,
}

/// Compare the model's analytic gradients against central finite differences
/// on one batch.
pub fn check_gradients(model: &mut Model, x: &Tensor, y: &Tensor, epsilon: f64) -> Result<GradCheckReport> {
    let pred = model.forward(x)?;
    let (_, d_pred) = mse_loss(&pred, y)?;
    let analytic = model.backward(&d_pred)?;
    let numeric = numerical_gradients(model, x, y, epsilon)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        params_checked: 0,
    };
    for (pi, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (e, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let rel = relative_error(av, nv);
            report.params_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (pi, e);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, LayerSpec};
    use crate::tensor::Padding;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_batch(batch: usize, len: usize, channels: usize, seed: u64) -> (Tensor, Tensor) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = Tensor::new(
            &[batch, len, channels],
            (0..batch * len * channels).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let y = Tensor::new(&[batch, 1], (0..batch).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
        (x, y)
    }

    fn assert_layer_grads(specs: &[LayerSpec], seed: u64) {
        let mut model = Model::new(8, 2, specs, seed).unwrap();
        let (x, y) = random_batch(3, 8, 2, seed ^ 0xABCD);
        let report = check_gradients(&mut model, &x, &y, DEFAULT_EPSILON).unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "max rel err {} at {:?} for {specs:?}",
            report.max_rel_error,
            report.worst
        );
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        for seed in 0..5 {
            assert_layer_grads(
                &[
                    LayerSpec::Flatten,
                    LayerSpec::Dense { units: 5, activation: Activation::Relu },
                    LayerSpec::Dense { units: 1, activation: Activation::Linear },
                ],
                seed,
            );
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        for seed in 0..5 {
            for padding in [Padding::Valid, Padding::Same] {
                assert_layer_grads(
                    &[
                        LayerSpec::Conv1d { filters: 3, kernel_len: 3, activation: Activation::Relu, padding },
                        LayerSpec::Flatten,
                        LayerSpec::Dense { units: 1, activation: Activation::Linear },
                    ],
                    seed,
                );
            }
        }
    }

    #[test]
    fn rnn_gradients_match_finite_differences() {
        for seed in 0..5 {
            assert_layer_grads(
                &[
                    LayerSpec::SimpleRnn { units: 4, activation: Activation::Tanh },
                    LayerSpec::Dense { units: 1, activation: Activation::Linear },
                ],
                seed,
            );
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        for seed in 0..5 {
            assert_layer_grads(
                &[
                    LayerSpec::Lstm { units: 3 },
                    LayerSpec::Dense { units: 1, activation: Activation::Linear },
                ],
                seed,
            );
        }
    }
}
