//! Affine map on the last axis, batched over leading axes.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub(crate) fn validate<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    if w.rank() != 2 {
        return Err(Error::config(format!(
            "linear weight must be [out x in], got {:?}",
            w.shape()
        )));
    }
    let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
    let last = *x.shape().last().ok_or_else(|| {
        Error::shape("linear", "input must have at least one axis")
    })?;
    if last != d_in {
        return Err(Error::shape(
            "linear",
            format!("input last axis {} != weight in-dim {}", last, d_in),
        ));
    }
    if b.shape() != [d_out] {
        return Err(Error::config(format!(
            "linear bias shape {:?} does not match out-dim {}",
            b.shape(),
            d_out
        )));
    }
    Ok((x.len() / d_in, d_in, d_out))
}

pub(crate) fn forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (m, d_in, d_out) = validate(x, w, b)?;
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().unwrap() = d_out;
    let mut y = Tensor::zeros(&out_shape);
    // y[m, o] = x[m, i] . w[o, i]^T
    T::gemm(
        m,
        d_in,
        d_out,
        T::ONE,
        x.data(),
        d_in as isize,
        1,
        w.data(),
        1,
        d_in as isize,
        T::ZERO,
        y.data_mut(),
    );
    let bd = b.data();
    for row in y.data_mut().chunks_mut(d_out) {
        for (v, &bias) in row.iter_mut().zip(bd) {
            *v += bias;
        }
    }
    Ok(y)
}

pub(crate) fn backward<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (d_out, d_in) = (w.shape()[0], w.shape()[1]);
    let m = x.len() / d_in;

    let mut gx = Tensor::zeros(x.shape());
    T::gemm(
        m,
        d_out,
        d_in,
        T::ONE,
        gy.data(),
        d_out as isize,
        1,
        w.data(),
        d_in as isize,
        1,
        T::ZERO,
        gx.data_mut(),
    );

    let mut gw = Tensor::zeros(w.shape());
    // gw[o, i] = gy^T[o, m] . x[m, i]
    T::gemm(
        d_out,
        m,
        d_in,
        T::ONE,
        gy.data(),
        1,
        d_out as isize,
        x.data(),
        d_in as isize,
        1,
        T::ZERO,
        gw.data_mut(),
    );

    let mut gb = Tensor::zeros(&[d_out]);
    let gbd = gb.data_mut();
    for row in gy.data().chunks(d_out) {
        for (acc, &v) in gbd.iter_mut().zip(row) {
            *acc += v;
        }
    }
    (gx, gw, gb)
}
