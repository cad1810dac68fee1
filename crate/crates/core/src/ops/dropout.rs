//! Dropout with elementwise and whole-channel masks.

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutStyle {
    /// Zero individual elements.
    Elementwise,
    /// Zero whole channels (axis 1 of a rank >= 2 tensor).
    Channel,
}

/// Train-mode dropout. Survivors are scaled by `1/(1-p)`; the mask is drawn
/// from `rng`, one uniform per mask slot, keeping a slot when `u >= p`.
/// Returns the output and the scaled mask for the backward pass.
pub(crate) fn forward<T: Scalar>(
    x: &Tensor<T>,
    p: f64,
    style: DropoutStyle,
    rng: &mut StreamRng,
) -> Result<(Tensor<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::config(format!(
            "dropout probability must be in [0, 1), got {}",
            p
        )));
    }
    let scale = T::from_f64(1.0 / (1.0 - p));
    let mask: Vec<T> = match style {
        DropoutStyle::Elementwise => (0..x.len())
            .map(|_| {
                if rng.uniform_f64() >= p {
                    scale
                } else {
                    T::ZERO
                }
            })
            .collect(),
        DropoutStyle::Channel => {
            if x.rank() < 2 {
                return Err(Error::shape(
                    "dropout",
                    format!("channel dropout needs rank >= 2, got {:?}", x.shape()),
                ));
            }
            (0..x.shape()[0] * x.shape()[1])
                .map(|_| {
                    if rng.uniform_f64() >= p {
                        scale
                    } else {
                        T::ZERO
                    }
                })
                .collect()
        }
    };
    Ok((apply(x, &mask, style), mask))
}

pub(crate) fn apply<T: Scalar>(x: &Tensor<T>, mask: &[T], style: DropoutStyle) -> Tensor<T> {
    let mut out = Tensor::zeros(x.shape());
    match style {
        DropoutStyle::Elementwise => {
            for ((o, &v), &m) in out.data_mut().iter_mut().zip(x.data()).zip(mask) {
                *o = v * m;
            }
        }
        DropoutStyle::Channel => {
            let slab = x.len() / mask.len();
            for (i, (o, &v)) in out.data_mut().iter_mut().zip(x.data()).enumerate() {
                *o = v * mask[i / slab];
            }
        }
    }
    out
}
