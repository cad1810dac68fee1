//! Grouped 2D cross-correlation over `[N, C, F, T]` feature maps.
//!
//! The general path lowers each image to columns (im2col) and runs a GEMM;
//! depthwise kernels use direct loops. Gradients with respect to the input
//! are data-parallel over the batch; weight gradients accumulate over the
//! batch in a fixed order so results do not depend on the thread count.

use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvCfg {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub groups: usize,
}

impl Default for ConvCfg {
    fn default() -> Self {
        ConvCfg {
            stride: (1, 1),
            padding: (0, 0),
            groups: 1,
        }
    }
}

/// floor((in + 2p - k)/s) + 1, or None when the kernel does not fit.
pub fn out_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub(crate) struct ConvDims {
    pub n: usize,
    pub cin: usize,
    pub cout: usize,
    pub in_f: usize,
    pub in_t: usize,
    pub k_f: usize,
    pub k_t: usize,
    pub out_f: usize,
    pub out_t: usize,
}

pub(crate) fn validate<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    cfg: &ConvCfg,
) -> Result<ConvDims> {
    let (n, cin, in_f, in_t) = x.dims4("conv2d")?;
    if w.rank() != 4 {
        return Err(Error::config(format!(
            "conv2d weight must be rank 4, got {:?}",
            w.shape()
        )));
    }
    let (cout, w_cin, k_f, k_t) = (w.dim(0), w.dim(1), w.dim(2), w.dim(3));
    let g = cfg.groups;
    if g == 0 || cin % g != 0 || cout % g != 0 {
        return Err(Error::config(format!(
            "conv2d groups {} must divide in_channels {} and out_channels {}",
            g, cin, cout
        )));
    }
    if w_cin != cin / g {
        return Err(Error::config(format!(
            "conv2d weight expects {} input channels per group, input has {} (groups {})",
            w_cin,
            cin / g,
            g
        )));
    }
    if b.shape() != [cout] {
        return Err(Error::config(format!(
            "conv2d bias shape {:?} does not match out_channels {}",
            b.shape(),
            cout
        )));
    }
    let out_f = out_extent(in_f, k_f, cfg.stride.0, cfg.padding.0);
    let out_t = out_extent(in_t, k_t, cfg.stride.1, cfg.padding.1);
    let (Some(out_f), Some(out_t)) = (out_f, out_t) else {
        return Err(Error::config(format!(
            "conv2d kernel {}x{} with stride {:?} padding {:?} does not fit input {}x{}",
            k_f, k_t, cfg.stride, cfg.padding, in_f, in_t
        )));
    };
    Ok(ConvDims {
        n,
        cin,
        cout,
        in_f,
        in_t,
        k_f,
        k_t,
        out_f,
        out_t,
    })
}

fn is_depthwise(d: &ConvDims, cfg: &ConvCfg) -> bool {
    cfg.groups == d.cin && d.cout == d.cin
}

/// Gather one image into columns: `cols[(c*kF + kf)*kT + kt][of*outT + ot]`.
fn im2col<T: Scalar>(
    x_img: &[T],
    c0: usize,
    c_per_g: usize,
    d: &ConvDims,
    cfg: &ConvCfg,
    cols: &mut [T],
) {
    let (s_f, s_t) = cfg.stride;
    let (p_f, p_t) = cfg.padding;
    let l = d.out_f * d.out_t;
    let mut row = 0;
    for c in 0..c_per_g {
        let plane = &x_img[(c0 + c) * d.in_f * d.in_t..(c0 + c + 1) * d.in_f * d.in_t];
        for kf in 0..d.k_f {
            for kt in 0..d.k_t {
                let dst = &mut cols[row * l..(row + 1) * l];
                row += 1;
                for of in 0..d.out_f {
                    let fi = of * s_f + kf;
                    let seg = &mut dst[of * d.out_t..(of + 1) * d.out_t];
                    if fi < p_f || fi >= d.in_f + p_f {
                        seg.fill(T::ZERO);
                        continue;
                    }
                    let fi = fi - p_f;
                    for (ot, slot) in seg.iter_mut().enumerate() {
                        let ti = ot * s_t + kt;
                        *slot = if ti < p_t || ti >= d.in_t + p_t {
                            T::ZERO
                        } else {
                            plane[fi * d.in_t + (ti - p_t)]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add columns back into one image (transpose of `im2col`).
fn col2im<T: Scalar>(
    cols: &[T],
    c0: usize,
    c_per_g: usize,
    d: &ConvDims,
    cfg: &ConvCfg,
    x_img: &mut [T],
) {
    let (s_f, s_t) = cfg.stride;
    let (p_f, p_t) = cfg.padding;
    let l = d.out_f * d.out_t;
    let mut row = 0;
    for c in 0..c_per_g {
        let plane = &mut x_img[(c0 + c) * d.in_f * d.in_t..(c0 + c + 1) * d.in_f * d.in_t];
        for kf in 0..d.k_f {
            for kt in 0..d.k_t {
                let src = &cols[row * l..(row + 1) * l];
                row += 1;
                for of in 0..d.out_f {
                    let fi = of * s_f + kf;
                    if fi < p_f || fi >= d.in_f + p_f {
                        continue;
                    }
                    let fi = fi - p_f;
                    for ot in 0..d.out_t {
                        let ti = ot * s_t + kt;
                        if ti >= p_t && ti < d.in_t + p_t {
                            plane[fi * d.in_t + (ti - p_t)] += src[of * d.out_t + ot];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    cfg: &ConvCfg,
) -> Result<Tensor<T>> {
    let d = validate(x, w, b, cfg)?;
    let mut out = Tensor::zeros(&[d.n, d.cout, d.out_f, d.out_t]);
    let img_in = d.cin * d.in_f * d.in_t;
    let img_out = d.cout * d.out_f * d.out_t;
    let l = d.out_f * d.out_t;

    if is_depthwise(&d, cfg) {
        let (s_f, s_t) = cfg.stride;
        let (p_f, p_t) = cfg.padding;
        let xd = x.data();
        let wd = w.data();
        let bd = b.data();
        parallel::for_each_chunk_mut(out.data_mut(), img_out, |n, out_img| {
            let x_img = &xd[n * img_in..(n + 1) * img_in];
            for c in 0..d.cout {
                let plane = &x_img[c * d.in_f * d.in_t..(c + 1) * d.in_f * d.in_t];
                let wk = &wd[c * d.k_f * d.k_t..(c + 1) * d.k_f * d.k_t];
                let dst = &mut out_img[c * l..(c + 1) * l];
                for of in 0..d.out_f {
                    for ot in 0..d.out_t {
                        let mut acc = bd[c];
                        for kf in 0..d.k_f {
                            let fi = of * s_f + kf;
                            if fi < p_f || fi >= d.in_f + p_f {
                                continue;
                            }
                            let fi = fi - p_f;
                            for kt in 0..d.k_t {
                                let ti = ot * s_t + kt;
                                if ti < p_t || ti >= d.in_t + p_t {
                                    continue;
                                }
                                acc += plane[fi * d.in_t + (ti - p_t)] * wk[kf * d.k_t + kt];
                            }
                        }
                        dst[of * d.out_t + ot] = acc;
                    }
                }
            }
        });
        return Ok(out);
    }

    let g = cfg.groups;
    let c_per_g = d.cin / g;
    let cout_g = d.cout / g;
    let k = c_per_g * d.k_f * d.k_t;
    let xd = x.data();
    let wd = w.data();
    let bd = b.data();
    parallel::for_each_chunk_mut(out.data_mut(), img_out, |n, out_img| {
        let x_img = &xd[n * img_in..(n + 1) * img_in];
        let mut cols = vec![T::ZERO; k * l];
        for gi in 0..g {
            im2col(x_img, gi * c_per_g, c_per_g, &d, cfg, &mut cols);
            let w_g = &wd[gi * cout_g * k..(gi + 1) * cout_g * k];
            let out_g = &mut out_img[gi * cout_g * l..(gi + 1) * cout_g * l];
            T::gemm(
                cout_g, k, l, T::ONE, w_g, k as isize, 1, &cols, l as isize, 1, T::ZERO, out_g,
            );
            for co in 0..cout_g {
                let bias = bd[gi * cout_g + co];
                for v in &mut out_g[co * l..(co + 1) * l] {
                    *v += bias;
                }
            }
        }
    });
    Ok(out)
}

pub(crate) fn backward_input<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    cfg: &ConvCfg,
) -> Result<Tensor<T>> {
    let d = validate(x, w, b, cfg)?;
    let mut gx = Tensor::zeros(&[d.n, d.cin, d.in_f, d.in_t]);
    let img_in = d.cin * d.in_f * d.in_t;
    let img_out = d.cout * d.out_f * d.out_t;
    let l = d.out_f * d.out_t;

    if is_depthwise(&d, cfg) {
        let (s_f, s_t) = cfg.stride;
        let (p_f, p_t) = cfg.padding;
        let gyd = gy.data();
        let wd = w.data();
        parallel::for_each_chunk_mut(gx.data_mut(), img_in, |n, gx_img| {
            let gy_img = &gyd[n * img_out..(n + 1) * img_out];
            for c in 0..d.cout {
                let wk = &wd[c * d.k_f * d.k_t..(c + 1) * d.k_f * d.k_t];
                let src = &gy_img[c * l..(c + 1) * l];
                let plane = &mut gx_img[c * d.in_f * d.in_t..(c + 1) * d.in_f * d.in_t];
                for of in 0..d.out_f {
                    for ot in 0..d.out_t {
                        let g = src[of * d.out_t + ot];
                        for kf in 0..d.k_f {
                            let fi = of * s_f + kf;
                            if fi < p_f || fi >= d.in_f + p_f {
                                continue;
                            }
                            let fi = fi - p_f;
                            for kt in 0..d.k_t {
                                let ti = ot * s_t + kt;
                                if ti < p_t || ti >= d.in_t + p_t {
                                    continue;
                                }
                                plane[fi * d.in_t + (ti - p_t)] += g * wk[kf * d.k_t + kt];
                            }
                        }
                    }
                }
            }
        });
        return Ok(gx);
    }

    let g = cfg.groups;
    let c_per_g = d.cin / g;
    let cout_g = d.cout / g;
    let k = c_per_g * d.k_f * d.k_t;
    let gyd = gy.data();
    let wd = w.data();
    parallel::for_each_chunk_mut(gx.data_mut(), img_in, |n, gx_img| {
        let gy_img = &gyd[n * img_out..(n + 1) * img_out];
        let mut dcols = vec![T::ZERO; k * l];
        for gi in 0..g {
            let w_g = &wd[gi * cout_g * k..(gi + 1) * cout_g * k];
            let gy_g = &gy_img[gi * cout_g * l..(gi + 1) * cout_g * l];
            // dcols = W^T . dY
            T::gemm(
                k, cout_g, l, T::ONE, w_g, 1, k as isize, gy_g, l as isize, 1, T::ZERO,
                &mut dcols,
            );
            col2im(&dcols, gi * c_per_g, c_per_g, &d, cfg, gx_img);
        }
    });
    Ok(gx)
}

pub(crate) fn backward_weight<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    cfg: &ConvCfg,
) -> Result<Tensor<T>> {
    let d = validate(x, w, b, cfg)?;
    let mut gw = Tensor::zeros(w.shape());
    let img_in = d.cin * d.in_f * d.in_t;
    let img_out = d.cout * d.out_f * d.out_t;
    let l = d.out_f * d.out_t;
    let xd = x.data();
    let gyd = gy.data();

    if is_depthwise(&d, cfg) {
        let (s_f, s_t) = cfg.stride;
        let (p_f, p_t) = cfg.padding;
        let kk = d.k_f * d.k_t;
        parallel::for_each_chunk_mut(gw.data_mut(), kk, |c, gw_c| {
            for n in 0..d.n {
                let plane = &xd[n * img_in + c * d.in_f * d.in_t..][..d.in_f * d.in_t];
                let src = &gyd[n * img_out + c * l..][..l];
                for of in 0..d.out_f {
                    for ot in 0..d.out_t {
                        let g = src[of * d.out_t + ot];
                        for kf in 0..d.k_f {
                            let fi = of * s_f + kf;
                            if fi < p_f || fi >= d.in_f + p_f {
                                continue;
                            }
                            let fi = fi - p_f;
                            for kt in 0..d.k_t {
                                let ti = ot * s_t + kt;
                                if ti < p_t || ti >= d.in_t + p_t {
                                    continue;
                                }
                                gw_c[kf * d.k_t + kt] += g * plane[fi * d.in_t + (ti - p_t)];
                            }
                        }
                    }
                }
            }
        });
        return Ok(gw);
    }

    let g = cfg.groups;
    let c_per_g = d.cin / g;
    let cout_g = d.cout / g;
    let k = c_per_g * d.k_f * d.k_t;
    let mut cols = vec![T::ZERO; k * l];
    // Accumulate over the batch sequentially: fixed summation order.
    for n in 0..d.n {
        let x_img = &xd[n * img_in..(n + 1) * img_in];
        let gy_img = &gyd[n * img_out..(n + 1) * img_out];
        for gi in 0..g {
            im2col(x_img, gi * c_per_g, c_per_g, &d, cfg, &mut cols);
            let gy_g = &gy_img[gi * cout_g * l..(gi + 1) * cout_g * l];
            let gw_g = &mut gw.data_mut()[gi * cout_g * k..(gi + 1) * cout_g * k];
            // dW += dY . cols^T
            T::gemm(
                cout_g, l, k, T::ONE, gy_g, l as isize, 1, &cols, 1, l as isize, T::ONE, gw_g,
            );
        }
    }
    Ok(gw)
}

pub(crate) fn backward_bias<T: Scalar>(gy: &Tensor<T>, cout: usize) -> Tensor<T> {
    let (n, _, out_f, out_t) = (gy.dim(0), gy.dim(1), gy.dim(2), gy.dim(3));
    let l = out_f * out_t;
    let gyd = gy.data();
    let mut gb = Tensor::zeros(&[cout]);
    for ni in 0..n {
        for c in 0..cout {
            let mut acc = T::ZERO;
            for &v in &gyd[(ni * cout + c) * l..(ni * cout + c + 1) * l] {
                acc += v;
            }
            gb.data_mut()[c] += acc;
        }
    }
    gb
}
