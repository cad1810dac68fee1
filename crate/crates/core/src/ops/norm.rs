//! Normalization kernels: batch norm, sub-spectral norm, frequency instance
//! norm.
//!
//! Sub-spectral norm partitions the frequency axis into `S` contiguous bands
//! and batch-normalizes each `(channel, band)` pair independently. Because the
//! layout `[N, C, F, T]` viewed as `[N, C*S, F/S, T]` is the identity on
//! memory, it shares the batch-norm kernel with `C*S` effective channels.

use crate::error::{Error, Result};
use crate::graph::Mode;
use crate::tensor::{Scalar, Tensor};

/// Running mean/variance buffer for one norm layer (not learnable).
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    /// Fresh stats: mean 0, var 1.
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::ZERO; channels],
            var: vec![T::ONE; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

/// Per-forward context the backward pass needs.
#[derive(Debug, Clone)]
pub(crate) struct BnCtx<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
    pub mode: Mode,
    /// Effective (channels, per-channel element count) of the normalized view.
    pub channels: usize,
    pub slab: usize,
    pub n: usize,
}

/// Batch norm over a `[N, C_eff, slab]` view of `x`, where `slab` is the
/// per-channel element count (`F*T` for plain batch norm).
#[allow(clippy::too_many_arguments)]
pub(crate) fn batchnorm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    mode: Mode,
    eps: f64,
    momentum: f64,
    channels: usize,
    slab: usize,
) -> Result<(Tensor<T>, BnCtx<T>)> {
    let n = x.len() / (channels * slab);
    if n * channels * slab != x.len() {
        return Err(Error::shape(
            "batchnorm2d",
            format!("input of {} elements is not [N x {} x {}]", x.len(), channels, slab),
        ));
    }
    if gamma.len() != channels || beta.len() != channels {
        return Err(Error::config(format!(
            "batchnorm2d gamma/beta length {}/{} does not match channel count {}",
            gamma.len(),
            beta.len(),
            channels
        )));
    }
    if running.channels() != channels {
        return Err(Error::config(format!(
            "batchnorm2d running stats track {} channels, expected {}",
            running.channels(),
            channels
        )));
    }
    if eps <= 0.0 {
        return Err(Error::config("batchnorm2d eps must be positive"));
    }

    let m = n * slab;
    let xd = x.data();
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![T::ZERO; channels];
            let mut var = vec![T::ZERO; channels];
            let inv_m = T::from_f64(1.0 / m as f64);
            for c in 0..channels {
                let mut acc = T::ZERO;
                for ni in 0..n {
                    let base = (ni * channels + c) * slab;
                    for &v in &xd[base..base + slab] {
                        acc += v;
                    }
                }
                let mu = acc * inv_m;
                let mut acc2 = T::ZERO;
                for ni in 0..n {
                    let base = (ni * channels + c) * slab;
                    for &v in &xd[base..base + slab] {
                        let d = v - mu;
                        acc2 += d * d;
                    }
                }
                mean[c] = mu;
                var[c] = acc2 * inv_m;
            }
            // Running stats use the unbiased variance estimate.
            let mom = T::from_f64(momentum);
            let keep = T::from_f64(1.0 - momentum);
            let bessel = if m > 1 {
                T::from_f64(m as f64 / (m as f64 - 1.0))
            } else {
                T::ONE
            };
            for c in 0..channels {
                running.mean[c] = keep * running.mean[c] + mom * mean[c];
                running.var[c] = keep * running.var[c] + mom * var[c] * bessel;
            }
            (mean, var)
        }
        Mode::Eval => (running.mean.clone(), running.var.clone()),
    };

    let eps_t = T::from_f64(eps);
    let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps_t).sqrt()).collect();
    let mut out = Tensor::zeros(x.shape());
    let od = out.data_mut();
    let gd = gamma.data();
    let bd = beta.data();
    for ni in 0..n {
        for c in 0..channels {
            let base = (ni * channels + c) * slab;
            let (mu, istd, g, b) = (mean[c], inv_std[c], gd[c], bd[c]);
            for i in base..base + slab {
                od[i] = (xd[i] - mu) * istd * g + b;
            }
        }
    }
    Ok((
        out,
        BnCtx {
            mean,
            inv_std,
            mode,
            channels,
            slab,
            n,
        },
    ))
}

/// Returns gradients `(gx, ggamma, gbeta)`.
pub(crate) fn batchnorm_backward<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    ctx: &BnCtx<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (channels, slab, n) = (ctx.channels, ctx.slab, ctx.n);
    let m = n * slab;
    let inv_m = T::from_f64(1.0 / m as f64);
    let xd = x.data();
    let gyd = gy.data();
    let gd = gamma.data();

    let mut gx = Tensor::zeros(x.shape());
    let mut ggamma = Tensor::zeros(&[channels]);
    let mut gbeta = Tensor::zeros(&[channels]);

    #[allow(clippy::needless_range_loop)]
    for c in 0..channels {
        let mu = ctx.mean[c];
        let istd = ctx.inv_std[c];
        let mut sum_gy = T::ZERO;
        let mut sum_gy_xhat = T::ZERO;
        for ni in 0..n {
            let base = (ni * channels + c) * slab;
            for i in base..base + slab {
                let xhat = (xd[i] - mu) * istd;
                sum_gy += gyd[i];
                sum_gy_xhat += gyd[i] * xhat;
            }
        }
        ggamma.data_mut()[c] = sum_gy_xhat;
        gbeta.data_mut()[c] = sum_gy;

        let gxd = gx.data_mut();
        match ctx.mode {
            Mode::Train => {
                let mean_gy = sum_gy * inv_m;
                let mean_gy_xhat = sum_gy_xhat * inv_m;
                let scale = gd[c] * istd;
                for ni in 0..n {
                    let base = (ni * channels + c) * slab;
                    for i in base..base + slab {
                        let xhat = (xd[i] - mu) * istd;
                        gxd[i] = scale * (gyd[i] - mean_gy - xhat * mean_gy_xhat);
                    }
                }
            }
            Mode::Eval => {
                let scale = gd[c] * istd;
                for ni in 0..n {
                    let base = (ni * channels + c) * slab;
                    for i in base..base + slab {
                        gxd[i] = scale * gyd[i];
                    }
                }
            }
        }
    }
    (gx, ggamma, gbeta)
}

/// Validate sub-spectral norm grouping and return the effective view
/// `(channels = C*S, slab = (F/S)*T)`.
pub(crate) fn ssn_view<T: Scalar>(
    x: &Tensor<T>,
    groups: usize,
) -> Result<(usize, usize)> {
    let (_, c, f, t) = x.dims4("subspectral_norm")?;
    if groups == 0 || !f.is_multiple_of(groups) {
        return Err(Error::config(format!(
            "subspectral_norm: {} sub-bands do not divide frequency dimension {}",
            groups, f
        )));
    }
    Ok((c * groups, (f / groups) * t))
}

/// Context for frequency instance norm backward.
#[derive(Debug, Clone)]
pub(crate) struct FinCtx<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

/// Instance norm on the frequency axis: each `(n, f)` slice is normalized by
/// statistics over `(c, t)`. Parameter-free; identical in train and eval.
pub(crate) fn freq_instance_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, FinCtx<T>)> {
    let (n, c, f, t) = x.dims4("freq_instance_norm")?;
    if c * t <= 1 {
        return Err(Error::shape(
            "freq_instance_norm",
            format!("needs C*T > 1, got C={} T={}", c, t),
        ));
    }
    let m = c * t;
    let inv_m = T::from_f64(1.0 / m as f64);
    let eps_t = T::from_f64(eps);
    let xd = x.data();
    let mut mean = vec![T::ZERO; n * f];
    let mut inv_std = vec![T::ZERO; n * f];
    let mut out = Tensor::zeros(x.shape());

    for ni in 0..n {
        for fi in 0..f {
            let mut acc = T::ZERO;
            for ci in 0..c {
                let base = ((ni * c + ci) * f + fi) * t;
                for &v in &xd[base..base + t] {
                    acc += v;
                }
            }
            let mu = acc * inv_m;
            let mut acc2 = T::ZERO;
            for ci in 0..c {
                let base = ((ni * c + ci) * f + fi) * t;
                for &v in &xd[base..base + t] {
                    let d = v - mu;
                    acc2 += d * d;
                }
            }
            let istd = T::ONE / (acc2 * inv_m + eps_t).sqrt();
            mean[ni * f + fi] = mu;
            inv_std[ni * f + fi] = istd;
            let od = out.data_mut();
            for ci in 0..c {
                let base = ((ni * c + ci) * f + fi) * t;
                for i in base..base + t {
                    od[i] = (xd[i] - mu) * istd;
                }
            }
        }
    }
    Ok((out, FinCtx { mean, inv_std }))
}

pub(crate) fn freq_instance_norm_backward<T: Scalar>(
    gy: &Tensor<T>,
    x: &Tensor<T>,
    ctx: &FinCtx<T>,
) -> Tensor<T> {
    let (n, c, f, t) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
    let m = c * t;
    let inv_m = T::from_f64(1.0 / m as f64);
    let xd = x.data();
    let gyd = gy.data();
    let mut gx = Tensor::zeros(x.shape());

    for ni in 0..n {
        for fi in 0..f {
            let mu = ctx.mean[ni * f + fi];
            let istd = ctx.inv_std[ni * f + fi];
            let mut sum_gy = T::ZERO;
            let mut sum_gy_xhat = T::ZERO;
            for ci in 0..c {
                let base = ((ni * c + ci) * f + fi) * t;
                for i in base..base + t {
                    let xhat = (xd[i] - mu) * istd;
                    sum_gy += gyd[i];
                    sum_gy_xhat += gyd[i] * xhat;
                }
            }
            let mean_gy = sum_gy * inv_m;
            let mean_gy_xhat = sum_gy_xhat * inv_m;
            let gxd = gx.data_mut();
            for ci in 0..c {
                let base = ((ni * c + ci) * f + fi) * t;
                for i in base..base + t {
                    let xhat = (xd[i] - mu) * istd;
                    gxd[i] = istd * (gyd[i] - mean_gy - xhat * mean_gy_xhat);
                }
            }
        }
    }
    gx
}
