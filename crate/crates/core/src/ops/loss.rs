//! Softmax cross-entropy over `[N, K]` logits.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Stabilized softmax probabilities and the (optionally class-weighted) mean
/// negative log-likelihood. Returns `(loss, probs, weight_sum)`.
pub(crate) fn forward<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
    class_weights: Option<&[T]>,
) -> Result<(T, Tensor<T>, T)> {
    if logits.rank() != 2 {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("logits must be [N x K], got {:?}", logits.shape()),
        ));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for {} rows", labels.len(), n),
        ));
    }
    if let Some(w) = class_weights {
        if w.len() != k {
            return Err(Error::config(format!(
                "class weights length {} != {} classes",
                w.len(),
                k
            )));
        }
    }
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::data(format!(
                "label {} at row {} out of range for {} classes",
                y, i, k
            )));
        }
    }

    let mut probs = Tensor::zeros(logits.shape());
    let mut loss = T::ZERO;
    let mut weight_sum = T::ZERO;
    for (i, (row, out)) in logits
        .data()
        .chunks(k)
        .zip(probs.data_mut().chunks_mut(k))
        .enumerate()
    {
        let mut max = row[0];
        for &v in row {
            max = max.maximum(v);
        }
        let mut denom = T::ZERO;
        for (o, &v) in out.iter_mut().zip(row) {
            *o = (v - max).exp();
            denom += *o;
        }
        for o in out.iter_mut() {
            *o = *o / denom;
        }
        let w = class_weights.map_or(T::ONE, |cw| cw[labels[i]]);
        // -ln p = max - z_y + ln(sum exp(z - max)), computed from logits to
        // avoid ln of a rounded probability.
        let log_p = row[labels[i]] - max - denom.ln();
        loss += -w * log_p;
        weight_sum += w;
    }
    Ok((loss / weight_sum, probs, weight_sum))
}

pub(crate) fn backward<T: Scalar>(
    gy: T,
    probs: &Tensor<T>,
    labels: &[usize],
    class_weights: Option<&[T]>,
    weight_sum: T,
) -> Tensor<T> {
    let k = probs.shape()[1];
    let mut gx = probs.clone();
    for (i, row) in gx.data_mut().chunks_mut(k).enumerate() {
        let w = class_weights.map_or(T::ONE, |cw| cw[labels[i]]);
        let scale = gy * w / weight_sum;
        for (j, v) in row.iter_mut().enumerate() {
            let onehot = if j == labels[i] { T::ONE } else { T::ZERO };
            *v = (*v - onehot) * scale;
        }
    }
    gx
}
