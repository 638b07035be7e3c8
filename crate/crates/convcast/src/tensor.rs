//! Dense row-major f64 tensors of rank 1..=3 and the handful of numeric
//! kernels the layer zoo is built on: matrix multiply, 1-D cross-correlation,
//! elementwise maps and reductions.
//!
//! Everything is double precision and single-threaded with a fixed summation
//! order, so repeated calls on identical inputs agree bitwise.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major numeric array with shape metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor from a shape and a row-major buffer.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::shape(
                "Tensor::new",
                format!("rank must be 1..=3, got {}", shape.len()),
            ));
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::shape(
                "Tensor::new",
                format!("extents must be >= 1, got {shape:?}"),
            ));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::shape(
                "Tensor::new",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Rank-2 identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    /// Rank-2 tensor from nested rows (test and example convenience).
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged rows");
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Tensor {
            shape: vec![r, c],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Reinterpret the buffer under a new shape of equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    #[inline]
    pub fn at1(&self, i: usize) -> f64 {
        debug_assert_eq!(self.rank(), 1);
        self.data[i]
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    #[inline]
    pub fn set2(&mut self, i: usize, j: usize, v: f64) {
        debug_assert_eq!(self.rank(), 2);
        let cols = self.shape[1];
        self.data[i * cols + j] = v;
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, v: f64) {
        debug_assert_eq!(self.rank(), 3);
        let (d1, d2) = (self.shape[1], self.shape[2]);
        self.data[(i * d1 + j) * d2 + k] = v;
    }

    /// Copy out row `i` of a rank-3 tensor as a rank-2 `[shape1, shape2]` tensor.
    pub fn index3(&self, i: usize) -> Tensor {
        debug_assert_eq!(self.rank(), 3);
        let stride = self.shape[1] * self.shape[2];
        Tensor {
            shape: vec![self.shape[1], self.shape[2]],
            data: self.data[i * stride..(i + 1) * stride].to_vec(),
        }
    }

    /// Copy out column block `[:, t, :]` of a rank-3 `[B, L, C]` tensor as `[B, C]`.
    pub fn time_slice(&self, t: usize) -> Tensor {
        debug_assert_eq!(self.rank(), 3);
        let (b, l, c) = (self.shape[0], self.shape[1], self.shape[2]);
        debug_assert!(t < l);
        let mut data = Vec::with_capacity(b * c);
        for i in 0..b {
            let start = (i * l + t) * c;
            data.extend_from_slice(&self.data[start..start + c]);
        }
        Tensor {
            shape: vec![b, c],
            data,
        }
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || other.rank() != 2 {
            return Err(Error::shape(
                "matmul",
                format!("expects rank-2 operands, got {:?} x {:?}", self.shape, other.shape),
            ));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("inner extents differ: {:?} x {:?}", self.shape, other.shape),
            ));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let row = &other.data[p * n..(p + 1) * n];
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape(
                "transpose",
                format!("expects rank-2, got {:?}", self.shape),
            ));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor {
            shape: vec![n, m],
            data: out,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with("hadamard", other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Column sums of a rank-2 tensor: `[B, U] -> [U]`.
    pub fn sum_rows(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape(
                "sum_rows",
                format!("expects rank-2, got {:?}", self.shape),
            ));
        }
        let (b, u) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0; u];
        for i in 0..b {
            for j in 0..u {
                out[j] += self.data[i * u + j];
            }
        }
        Ok(Tensor {
            shape: vec![u],
            data: out,
        })
    }

    /// Add a rank-1 row vector to every row of a rank-2 tensor.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || row.rank() != 1 || self.shape[1] != row.shape[0] {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + {:?}", self.shape, row.shape),
            ));
        }
        let (b, u) = (self.shape[0], self.shape[1]);
        let mut data = self.data.clone();
        for i in 0..b {
            for j in 0..u {
                data[i * u + j] += row.data[j];
            }
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    fn zip_with(&self, op: &'static str, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Derivative of ReLU evaluated at the pre-activation: `1` where `x > 0`,
/// `0` elsewhere (the subgradient at exactly zero is pinned to 0).
pub fn relu_grad(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

/// Derivative of tanh evaluated at the pre-activation.
pub fn tanh_grad(x: &Tensor) -> Tensor {
    x.map(|v| 1.0 - v.tanh() * v.tanh())
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Derivative of sigmoid evaluated at the pre-activation.
pub fn sigmoid_grad(x: &Tensor) -> Tensor {
    x.map(|v| {
        let s = sigmoid_scalar(v);
        s * (1.0 - s)
    })
}

#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// How the 1-D convolution treats the sequence boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output restricted to positions where the kernel fully overlaps the
    /// input: length `L - K + 1`.
    #[default]
    Valid,
    /// Zero-pad so the output length equals the input length (stride 1).
    Same,
}

/// Valid-padding 1-D cross-correlation.
///
/// `input` is `[L, C]`, `kernels` is `[K, C, F]`, `bias` is `[F]`; the result
/// is `[L - K + 1, F]` with
/// `out[t, f] = bias[f] + sum_{k, c} input[t + k, c] * kernels[k, c, f]`.
/// No kernel flip, stride 1.
pub fn conv1d_valid(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    conv1d(input, kernels, bias, Padding::Valid)
}

/// Same-padding variant: zero-pads `K - 1` positions (split left/right, extra
/// on the right for even excess) so the output is `[L, F]`.
pub fn conv1d_same(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    conv1d(input, kernels, bias, Padding::Same)
}

pub fn conv1d(input: &Tensor, kernels: &Tensor, bias: &Tensor, padding: Padding) -> Result<Tensor> {
    let (l, c) = check_conv_shapes(input, kernels, bias)?;
    let (k, f) = (kernels.shape()[0], kernels.shape()[2]);
    if k > l && padding == Padding::Valid {
        return Err(Error::KernelTooLong { kernel: k, input: l });
    }
    let pad_left = match padding {
        Padding::Valid => 0isize,
        Padding::Same => ((k - 1) / 2) as isize,
    };
    let out_len = match padding {
        Padding::Valid => l - k + 1,
        Padding::Same => l,
    };
    let mut out = Tensor::zeros(&[out_len, f]);
    for t in 0..out_len {
        for fi in 0..f {
            let mut acc = bias.at1(fi);
            for kk in 0..k {
                let src = t as isize + kk as isize - pad_left;
                if src < 0 || src >= l as isize {
                    continue;
                }
                for cc in 0..c {
                    acc += input.at2(src as usize, cc) * kernels.at3(kk, cc, fi);
                }
            }
            out.set2(t, fi, acc);
        }
    }
    Ok(out)
}

fn check_conv_shapes(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    if input.rank() != 2 || kernels.rank() != 3 || bias.rank() != 1 {
        return Err(Error::shape(
            "conv1d",
            format!(
                "expects input [L,C], kernels [K,C,F], bias [F]; got {:?}, {:?}, {:?}",
                input.shape(),
                kernels.shape(),
                bias.shape()
            ),
        ));
    }
    let (l, c) = (input.shape()[0], input.shape()[1]);
    if kernels.shape()[1] != c {
        return Err(Error::shape(
            "conv1d",
            format!("channel extents differ: input C={c}, kernels C={}", kernels.shape()[1]),
        ));
    }
    if bias.shape()[0] != kernels.shape()[2] {
        return Err(Error::shape(
            "conv1d",
            format!(
                "bias extent {} does not match filter count {}",
                bias.shape()[0],
                kernels.shape()[2]
            ),
        ));
    }
    Ok((l, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matmul_identity_is_noop() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let out = Tensor::identity(3).matmul(&a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_hand_example() {
        let a = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let b = Tensor::from_rows(&[&[5.0], &[6.0]]);
        let out = a.matmul(&b).unwrap();
        assert_eq!(out, Tensor::from_rows(&[&[17.0], &[39.0]]));
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = Tensor::zeros(&[2, 3]);
        let b = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let out = z.matmul(&b).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
        assert_eq!(out.shape(), &[2, 2]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        assert!(matches!(a.matmul(&b), Err(Error::ShapeMismatch { .. })));
    }

    fn single_channel_input(values: &[f64]) -> Tensor {
        Tensor::new(&[values.len(), 1], values.to_vec()).unwrap()
    }

    #[test]
    fn conv_shift_pick_kernel() {
        let input = single_channel_input(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let kernel = Tensor::new(&[3, 1, 1], vec![1.0, 0.0, 0.0]).unwrap();
        let bias = Tensor::from_slice(&[0.0]);
        let out = conv1d_valid(&input, &kernel, &bias).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv_box_kernel() {
        let input = single_channel_input(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let kernel = Tensor::new(&[3, 1, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let bias = Tensor::from_slice(&[0.0]);
        let out = conv1d_valid(&input, &kernel, &bias).unwrap();
        assert_eq!(out.data(), &[6.0, 9.0, 12.0]);
    }

    #[test]
    fn conv_zero_kernels_emit_bias() {
        let input = Tensor::new(&[6, 2], (0..12).map(f64::from).collect()).unwrap();
        let kernel = Tensor::zeros(&[3, 2, 4]);
        let bias = Tensor::from_slice(&[0.5, -1.0, 2.0, 0.0]);
        let out = conv1d_valid(&input, &kernel, &bias).unwrap();
        assert_eq!(out.shape(), &[4, 4]);
        for t in 0..4 {
            for f in 0..4 {
                assert_eq!(out.at2(t, f), bias.at1(f));
            }
        }
    }

    #[test]
    fn conv_kernel_too_long() {
        let input = single_channel_input(&[1.0, 2.0]);
        let kernel = Tensor::zeros(&[3, 1, 1]);
        let bias = Tensor::from_slice(&[0.0]);
        assert!(matches!(
            conv1d_valid(&input, &kernel, &bias),
            Err(Error::KernelTooLong { kernel: 3, input: 2 })
        ));
    }

    #[test]
    fn conv_same_padding_preserves_length() {
        let input = single_channel_input(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let kernel = Tensor::new(&[3, 1, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let bias = Tensor::from_slice(&[0.0]);
        let out = conv1d_same(&input, &kernel, &bias).unwrap();
        // Boundary positions see one zero pad each.
        assert_eq!(out.data(), &[3.0, 6.0, 9.0, 12.0, 9.0]);
    }

    #[test]
    fn relu_and_grad_pin_zero() {
        let x = Tensor::from_slice(&[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(relu_grad(&x).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn elementwise_basics() {
        assert_eq!(sigmoid(&Tensor::from_slice(&[0.0])).at1(0), 0.5);
        assert_eq!(tanh(&Tensor::from_slice(&[0.0])).at1(0), 0.0);
        assert_eq!(Tensor::from_slice(&[1.0, 2.0, 3.0, 6.0]).mean(), 3.0);
        let a = Tensor::from_slice(&[1.0, 2.0]);
        let b = Tensor::from_slice(&[3.0, 5.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 7.0]);
        assert_eq!(a.sub(&b).unwrap().data(), &[-2.0, -3.0]);
        assert_eq!(a.hadamard(&b).unwrap().data(), &[3.0, 10.0]);
        assert_eq!(a.scale(-2.0).data(), &[-2.0, -4.0]);
        let c = Tensor::zeros(&[3]);
        assert!(matches!(a.add(&c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn time_slice_gathers_step() {
        // [B=2, L=3, C=2]
        let t = Tensor::new(&[2, 3, 2], (0..12).map(f64::from).collect()).unwrap();
        let s = t.time_slice(1);
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[2.0, 3.0, 8.0, 9.0]);
    }

    proptest! {
        #[test]
        fn relu_is_idempotent(values in proptest::collection::vec(-100.0f64..100.0, 1..40)) {
            let x = Tensor::from_slice(&values);
            prop_assert_eq!(relu(&relu(&x)), relu(&x));
        }

        #[test]
        fn matmul_transpose_identity(
            m in 1usize..5, k in 1usize..5, n in 1usize..5,
            seed in 0u64..1000,
        ) {
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            };
            let a = Tensor::new(&[m, k], (0..m * k).map(|_| next()).collect()).unwrap();
            let b = Tensor::new(&[k, n], (0..k * n).map(|_| next()).collect()).unwrap();
            let lhs = a.matmul(&b).unwrap().transpose().unwrap();
            let rhs = b.transpose().unwrap().matmul(&a.transpose().unwrap()).unwrap();
            for (x, y) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn conv_output_shape_formula(
            l in 1usize..=20, c in 1usize..=3, f in 1usize..=5, k in 1usize..=6,
        ) {
            prop_assume!(k <= l);
            let input = Tensor::filled(&[l, c], 1.0);
            let kernels = Tensor::filled(&[k, c, f], 0.25);
            let bias = Tensor::zeros(&[f]);
            let out = conv1d_valid(&input, &kernels, &bias).unwrap();
            prop_assert_eq!(out.shape(), &[l - k + 1, f]);
            let same = conv1d_same(&input, &kernels, &bias).unwrap();
            prop_assert_eq!(same.shape(), &[l, f]);
        }
    }
}
