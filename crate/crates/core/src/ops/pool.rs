//! Pooling and frequency broadcast over `[N, C, F, T]` maps.

use crate::error::{Error, Result};
use crate::ops::conv::out_extent;
use crate::parallel;
use crate::tensor::{Scalar, Tensor};

/// Max pooling forward; returns the output and, per output element, the flat
/// index of its source inside the image (first maximum wins ties).
pub(crate) fn maxpool_forward<T: Scalar>(
    x: &Tensor<T>,
    kernel: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<T>, Vec<u32>)> {
    let (n, c, in_f, in_t) = x.dims4("maxpool2d")?;
    if kernel.0 > in_f || kernel.1 > in_t {
        return Err(Error::config(format!(
            "maxpool2d kernel {:?} larger than input {}x{}",
            kernel, in_f, in_t
        )));
    }
    if stride.0 == 0 || stride.1 == 0 {
        return Err(Error::config("maxpool2d stride must be positive"));
    }
    let out_f = out_extent(in_f, kernel.0, stride.0, 0).unwrap();
    let out_t = out_extent(in_t, kernel.1, stride.1, 0).unwrap();
    let img_in = c * in_f * in_t;
    let img_out = c * out_f * out_t;
    let mut out = Tensor::zeros(&[n, c, out_f, out_t]);
    let mut argmax = vec![0u32; n * img_out];

    type ImageSlot<'a, T> = (usize, (&'a mut [T], &'a mut [u32]));
    let xd = x.data();
    {
        // Pair each output image with its argmax slab so one pass fills both.
        let out_chunks = out.data_mut().chunks_mut(img_out);
        let arg_chunks = argmax.chunks_mut(img_out);
        let work: Vec<ImageSlot<'_, T>> = out_chunks.zip(arg_chunks).enumerate().collect();
        let body = |(ni, (out_img, arg_img)): ImageSlot<'_, T>| {
            let x_img = &xd[ni * img_in..(ni + 1) * img_in];
            for ci in 0..c {
                let plane = &x_img[ci * in_f * in_t..(ci + 1) * in_f * in_t];
                for of in 0..out_f {
                    for ot in 0..out_t {
                        let f0 = of * stride.0;
                        let t0 = ot * stride.1;
                        let mut best = plane[f0 * in_t + t0];
                        let mut best_idx = f0 * in_t + t0;
                        for kf in 0..kernel.0 {
                            for kt in 0..kernel.1 {
                                let idx = (f0 + kf) * in_t + (t0 + kt);
                                if plane[idx] > best {
                                    best = plane[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        out_img[(ci * out_f + of) * out_t + ot] = best;
                        arg_img[(ci * out_f + of) * out_t + ot] =
                            (ci * in_f * in_t + best_idx) as u32;
                    }
                }
            }
        };
        if parallel::single_thread() {
            work.into_iter().for_each(body);
        } else {
            use rayon::prelude::*;
            work.into_par_iter().for_each(body);
        }
    }
    Ok((out, argmax))
}

pub(crate) fn maxpool_backward<T: Scalar>(
    gy: &Tensor<T>,
    argmax: &[u32],
    in_shape: &[usize],
) -> Tensor<T> {
    let mut gx = Tensor::<T>::zeros(in_shape);
    let img_in = in_shape[1] * in_shape[2] * in_shape[3];
    let img_out = gy.len() / in_shape[0];
    let gyd = gy.data();
    parallel::for_each_chunk_mut(gx.data_mut(), img_in, |n, gx_img| {
        let base = n * img_out;
        for i in 0..img_out {
            gx_img[argmax[base + i] as usize] += gyd[base + i];
        }
    });
    gx
}

/// Mean over the frequency axis: `[N, C, F, T] -> [N, C, 1, T]`.
pub(crate) fn freq_avgpool_forward<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, f, t) = x.dims4("freq_avgpool")?;
    if f == 0 {
        return Err(Error::shape("freq_avgpool", "empty frequency axis"));
    }
    let inv = T::from_f64(1.0 / f as f64);
    let mut out = Tensor::zeros(&[n, c, 1, t]);
    let xd = x.data();
    let od = out.data_mut();
    for nc in 0..n * c {
        let src = &xd[nc * f * t..(nc + 1) * f * t];
        let dst = &mut od[nc * t..(nc + 1) * t];
        for fi in 0..f {
            for ti in 0..t {
                dst[ti] += src[fi * t + ti];
            }
        }
        for v in dst.iter_mut() {
            *v *= inv;
        }
    }
    Ok(out)
}

pub(crate) fn freq_avgpool_backward<T: Scalar>(gy: &Tensor<T>, f: usize) -> Tensor<T> {
    let (n, c, _, t) = (gy.dim(0), gy.dim(1), gy.dim(2), gy.dim(3));
    let inv = T::from_f64(1.0 / f as f64);
    let mut gx = Tensor::zeros(&[n, c, f, t]);
    let gyd = gy.data();
    let gxd = gx.data_mut();
    for nc in 0..n * c {
        let src = &gyd[nc * t..(nc + 1) * t];
        let dst = &mut gxd[nc * f * t..(nc + 1) * f * t];
        for fi in 0..f {
            for ti in 0..t {
                dst[fi * t + ti] = src[ti] * inv;
            }
        }
    }
    gx
}

/// Replicate a single frequency row: `[N, C, 1, T] -> [N, C, F, T]`.
pub(crate) fn broadcast_freq_forward<T: Scalar>(x: &Tensor<T>, f: usize) -> Result<Tensor<T>> {
    let (n, c, in_f, t) = x.dims4("broadcast_freq")?;
    if in_f != 1 {
        return Err(Error::shape(
            "broadcast_freq",
            format!("input frequency axis must be 1, got {}", in_f),
        ));
    }
    if f == 0 {
        return Err(Error::shape("broadcast_freq", "target F must be >= 1"));
    }
    let mut out = Tensor::zeros(&[n, c, f, t]);
    let xd = x.data();
    let od = out.data_mut();
    for nc in 0..n * c {
        let src = &xd[nc * t..(nc + 1) * t];
        let dst = &mut od[nc * f * t..(nc + 1) * f * t];
        for fi in 0..f {
            dst[fi * t..(fi + 1) * t].copy_from_slice(src);
        }
    }
    Ok(out)
}

pub(crate) fn broadcast_freq_backward<T: Scalar>(gy: &Tensor<T>) -> Tensor<T> {
    let (n, c, f, t) = (gy.dim(0), gy.dim(1), gy.dim(2), gy.dim(3));
    let mut gx = Tensor::zeros(&[n, c, 1, t]);
    let gyd = gy.data();
    let gxd = gx.data_mut();
    for nc in 0..n * c {
        let src = &gyd[nc * f * t..(nc + 1) * f * t];
        let dst = &mut gxd[nc * t..(nc + 1) * t];
        for fi in 0..f {
            for ti in 0..t {
                dst[ti] += src[fi * t + ti];
            }
        }
    }
    gx
}
