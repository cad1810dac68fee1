//! Elementwise activations.

use crate::tensor::{Scalar, Tensor};

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

pub(crate) fn swish_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v * sigmoid(v))
}

/// d/dx [x * sigmoid(x)] = sigmoid(x) * (1 + x * (1 - sigmoid(x)))
pub(crate) fn swish_backward<T: Scalar>(gy: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    let mut gx = Tensor::zeros(x.shape());
    for ((g, &y), &v) in gx.data_mut().iter_mut().zip(gy.data()).zip(x.data()) {
        let s = sigmoid(v);
        *g = y * s * (T::ONE + v * (T::ONE - s));
    }
    gx
}

pub(crate) fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.maximum(T::ZERO))
}

pub(crate) fn relu_backward<T: Scalar>(gy: &Tensor<T>, x: &Tensor<T>) -> Tensor<T> {
    let mut gx = Tensor::zeros(x.shape());
    for ((g, &y), &v) in gx.data_mut().iter_mut().zip(gy.data()).zip(x.data()) {
        *g = if v > T::ZERO { y } else { T::ZERO };
    }
    gx
}
