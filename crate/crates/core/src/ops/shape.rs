//! Structural ops: permute, axis mean, elementwise add, scalarization.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub(crate) fn permute<T: Scalar>(x: &Tensor<T>, perm: &[usize]) -> Result<Tensor<T>> {
    let rank = x.rank();
    if perm.len() != rank {
        return Err(Error::shape(
            "permute",
            format!("permutation {:?} for rank {}", perm, rank),
        ));
    }
    let mut seen = vec![false; rank];
    for &p in perm {
        if p >= rank || seen[p] {
            return Err(Error::shape("permute", format!("invalid permutation {:?}", perm)));
        }
        seen[p] = true;
    }
    let in_shape = x.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();

    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    // Stride of each output axis in the input buffer.
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();

    let mut out = Tensor::zeros(&out_shape);
    let od = out.data_mut();
    let xd = x.data();
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for slot in od.iter_mut() {
        *slot = xd[src];
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            src -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    Ok(out)
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// Mean over one axis, removing it from the shape.
pub(crate) fn mean_axis<T: Scalar>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.rank() {
        return Err(Error::shape(
            "mean_axis",
            format!("axis {} out of range for rank {}", axis, x.rank()),
        ));
    }
    let shape = x.shape();
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);
    let inv = T::from_f64(1.0 / n as f64);

    let mut out = Tensor::zeros(&out_shape);
    let od = out.data_mut();
    let xd = x.data();
    for o in 0..outer {
        for a in 0..n {
            let base = (o * n + a) * inner;
            let dst = &mut od[o * inner..(o + 1) * inner];
            for (d, &v) in dst.iter_mut().zip(&xd[base..base + inner]) {
                *d += v;
            }
        }
    }
    for v in od.iter_mut() {
        *v *= inv;
    }
    Ok(out)
}

pub(crate) fn mean_axis_backward<T: Scalar>(
    gy: &Tensor<T>,
    in_shape: &[usize],
    axis: usize,
) -> Tensor<T> {
    let outer: usize = in_shape[..axis].iter().product();
    let n = in_shape[axis];
    let inner: usize = in_shape[axis + 1..].iter().product();
    let inv = T::from_f64(1.0 / n as f64);
    let mut gx = Tensor::zeros(in_shape);
    let gd = gx.data_mut();
    let gyd = gy.data();
    for o in 0..outer {
        let src = &gyd[o * inner..(o + 1) * inner];
        for a in 0..n {
            let base = (o * n + a) * inner;
            for (d, &v) in gd[base..base + inner].iter_mut().zip(src) {
                *d = v * inv;
            }
        }
    }
    gx
}
