use super::{Real, Tensor};
use crate::error::Result;

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the saved input was strictly positive.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, saved_input: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.ensure_shape("relu_backward", saved_input.shape())?;
    let data = grad_out
        .data()
        .iter()
        .zip(saved_input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}

pub fn sigmoid<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Backward of [`sigmoid`] given its saved output `s`: `g·s·(1−s)`.
pub fn sigmoid_backward<T: Real>(grad_out: &Tensor<T>, saved_output: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.ensure_shape("sigmoid_backward", saved_output.shape())?;
    let data = grad_out
        .data()
        .iter()
        .zip(saved_output.data())
        .map(|(&g, &s)| g * s * (T::one() - s))
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}

pub fn tanh<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.tanh())
}

/// Backward of [`tanh`] given its saved output `t`: `g·(1−t²)`.
pub fn tanh_backward<T: Real>(grad_out: &Tensor<T>, saved_output: &Tensor<T>) -> Result<Tensor<T>> {
    grad_out.ensure_shape("tanh_backward", saved_output.shape())?;
    let data = grad_out
        .data()
        .iter()
        .zip(saved_output.data())
        .map(|(&g, &t)| g * (T::one() - t * t))
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}
