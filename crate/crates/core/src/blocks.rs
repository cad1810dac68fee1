//! Broadcast-residual building blocks.
//!
//! A BC ResBlock splits into a 2D path `f2` (3x1 frequency-depthwise conv +
//! sub-spectral norm) and a 1D temporal path `f1` (1x3 temporal-depthwise
//! conv + batch norm + swish + 1x1 pointwise conv + channel dropout) applied
//! after frequency average pooling; the temporal features are broadcast back
//! over frequency:
//!
//!   normal:     y = x + f2(x) + BC(f1(avgpool(f2(x))))
//!   transition: x' = relu(bn(conv1x1(x)));  y = f2(x') + BC(f1(avgpool(f2(x'))))
//!
//! A transition block changes the channel count through the 1x1 entry
//! projection and has no identity shortcut. An AB Block chains one leading
//! block, `n_normal` normal blocks and an optional trailing 3x3 conv +
//! batch norm + ReLU that restores a full 2D view after the frequency
//! averaging.

use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, NodeId};
use crate::ops::{ConvCfg, DropoutStyle};
use crate::param::{bind, kaiming_uniform, ParamStore};
use crate::rng::StreamRng;
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const IN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Normal,
    Transition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcResBlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: (usize, usize),
    pub kind: BlockKind,
    pub ssn_groups: usize,
    /// Channel dropout probability inside `f1`.
    pub dropout_p: f64,
}

impl BcResBlockSpec {
    pub fn normal(channels: usize, ssn_groups: usize, dropout_p: f64) -> BcResBlockSpec {
        BcResBlockSpec {
            in_channels: channels,
            out_channels: channels,
            stride: (1, 1),
            kind: BlockKind::Normal,
            ssn_groups,
            dropout_p,
        }
    }

    pub fn transition(
        in_channels: usize,
        out_channels: usize,
        stride: (usize, usize),
        ssn_groups: usize,
        dropout_p: f64,
    ) -> BcResBlockSpec {
        BcResBlockSpec {
            in_channels,
            out_channels,
            stride,
            kind: BlockKind::Transition,
            ssn_groups,
            dropout_p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == BlockKind::Normal
            && (self.in_channels != self.out_channels || self.stride != (1, 1))
        {
            return Err(Error::config(format!(
                "normal BC ResBlock requires equal channels and unit stride, got {} -> {} stride {:?}",
                self.in_channels, self.out_channels, self.stride
            )));
        }
        if self.ssn_groups == 0 {
            return Err(Error::config("ssn_groups must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config(format!(
                "block dropout probability {} out of [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbBlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: (usize, usize),
    pub n_normal: usize,
    pub last_conv: bool,
    pub last_conv_kernel: (usize, usize),
    pub ssn_groups: usize,
    pub dropout_p: f64,
}

impl AbBlockSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        stride: (usize, usize),
        n_normal: usize,
        last_conv: bool,
        ssn_groups: usize,
        dropout_p: f64,
    ) -> AbBlockSpec {
        AbBlockSpec {
            in_channels,
            out_channels,
            stride,
            n_normal,
            last_conv,
            last_conv_kernel: (3, 3),
            ssn_groups,
            dropout_p,
        }
    }

    /// The leading block is a transition unless the AB block changes nothing.
    pub fn leading_kind(&self) -> BlockKind {
        if self.in_channels == self.out_channels && self.stride == (1, 1) {
            BlockKind::Normal
        } else {
            BlockKind::Transition
        }
    }

    fn leading_spec(&self) -> BcResBlockSpec {
        match self.leading_kind() {
            BlockKind::Normal => {
                BcResBlockSpec::normal(self.out_channels, self.ssn_groups, self.dropout_p)
            }
            BlockKind::Transition => BcResBlockSpec::transition(
                self.in_channels,
                self.out_channels,
                self.stride,
                self.ssn_groups,
                self.dropout_p,
            ),
        }
    }
}

/// Register `gamma`/`beta` plus a running-stats buffer for one norm layer.
fn register_norm<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    channels: usize,
) -> Result<()> {
    store.register(&format!("{prefix}.gamma"), Tensor::full(&[channels], T::ONE))?;
    store.register(&format!("{prefix}.beta"), Tensor::zeros(&[channels]))?;
    store.register_buffer(prefix, channels)?;
    Ok(())
}

fn register_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    shape: [usize; 4],
    root: &StreamRng,
) -> Result<()> {
    let fan_in = shape[1] * shape[2] * shape[3];
    let name = format!("{prefix}.weight");
    store.register(&name, kaiming_uniform(&shape, fan_in, &name, root))?;
    store.register(&format!("{prefix}.bias"), Tensor::zeros(&[shape[0]]))?;
    Ok(())
}

pub fn register_bc_resblock<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    spec: &BcResBlockSpec,
    root: &StreamRng,
) -> Result<()> {
    spec.validate()?;
    let c = spec.out_channels;
    if spec.kind == BlockKind::Transition {
        register_conv(
            store,
            &format!("{prefix}.proj"),
            [c, spec.in_channels, 1, 1],
            root,
        )?;
        register_norm(store, &format!("{prefix}.proj_bn"), c)?;
    }
    register_conv(store, &format!("{prefix}.dw_f"), [c, 1, 3, 1], root)?;
    store.register(
        &format!("{prefix}.ssn.gamma"),
        Tensor::full(&[c * spec.ssn_groups], T::ONE),
    )?;
    store.register(
        &format!("{prefix}.ssn.beta"),
        Tensor::zeros(&[c * spec.ssn_groups]),
    )?;
    store.register_buffer(&format!("{prefix}.ssn"), c * spec.ssn_groups)?;
    register_conv(store, &format!("{prefix}.dw_t"), [c, 1, 1, 3], root)?;
    register_norm(store, &format!("{prefix}.bn"), c)?;
    register_conv(store, &format!("{prefix}.pw"), [c, c, 1, 1], root)?;
    Ok(())
}

pub fn register_ab_block<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    spec: &AbBlockSpec,
    root: &StreamRng,
) -> Result<()> {
    register_bc_resblock(store, &format!("{prefix}.trans"), &spec.leading_spec(), root)?;
    for i in 1..=spec.n_normal {
        let normal = BcResBlockSpec::normal(spec.out_channels, spec.ssn_groups, spec.dropout_p);
        register_bc_resblock(store, &format!("{prefix}.norm{i}"), &normal, root)?;
    }
    if spec.last_conv {
        let c = spec.out_channels;
        let (kf, kt) = spec.last_conv_kernel;
        register_conv(store, &format!("{prefix}.last_conv"), [c, c, kf, kt], root)?;
        register_norm(store, &format!("{prefix}.last_bn"), c)?;
    }
    Ok(())
}

/// One batchnorm layer: binds gamma/beta and updates the named running stats.
fn norm_layer<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    prefix: &str,
    store: &mut ParamStore<T>,
    mode: Mode,
) -> Result<NodeId> {
    let gamma = bind(g, store, &format!("{prefix}.gamma"))?;
    let beta = bind(g, store, &format!("{prefix}.beta"))?;
    let buf = store.buffer_index_of(prefix)?;
    g.batchnorm2d(
        x,
        gamma,
        beta,
        store.buffer_mut(buf),
        mode,
        BN_EPS,
        BN_MOMENTUM,
    )
}

pub fn bc_resblock_forward<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    spec: &BcResBlockSpec,
    prefix: &str,
    store: &mut ParamStore<T>,
    mode: Mode,
    rng: &mut StreamRng,
) -> Result<NodeId> {
    spec.validate()?;
    let c = spec.out_channels;
    let (s_f, s_t) = spec.stride;

    let x = match spec.kind {
        BlockKind::Normal => x,
        BlockKind::Transition => {
            let w = bind(g, store, &format!("{prefix}.proj.weight"))?;
            let b = bind(g, store, &format!("{prefix}.proj.bias"))?;
            let y = g.conv2d(x, w, b, ConvCfg::default())?;
            let y = norm_layer(g, y, &format!("{prefix}.proj_bn"), store, mode)?;
            g.relu(y)?
        }
    };

    // f2: 3x1 frequency-depthwise conv (frequency stride lives here) + SSN
    let f2 = {
        let w = bind(g, store, &format!("{prefix}.dw_f.weight"))?;
        let b = bind(g, store, &format!("{prefix}.dw_f.bias"))?;
        let y = g.conv2d(
            x,
            w,
            b,
            ConvCfg {
                stride: (s_f, 1),
                padding: (1, 0),
                groups: c,
            },
        )?;
        let gamma = bind(g, store, &format!("{prefix}.ssn.gamma"))?;
        let beta = bind(g, store, &format!("{prefix}.ssn.beta"))?;
        let buf = store.buffer_index_of(&format!("{prefix}.ssn"))?;
        g.subspectral_norm(
            y,
            gamma,
            beta,
            store.buffer_mut(buf),
            spec.ssn_groups,
            mode,
            BN_EPS,
            BN_MOMENTUM,
        )?
    };
    let out_f = g.value(f2).dim(2);

    // f1 on the frequency-averaged map: 1x3 temporal-depthwise conv
    // (temporal stride lives here) + BN + swish + 1x1 pointwise + dropout
    let f1 = {
        let u = g.freq_avgpool(f2)?;
        let w = bind(g, store, &format!("{prefix}.dw_t.weight"))?;
        let b = bind(g, store, &format!("{prefix}.dw_t.bias"))?;
        let u = g.conv2d(
            u,
            w,
            b,
            ConvCfg {
                stride: (1, s_t),
                padding: (0, 1),
                groups: c,
            },
        )?;
        let u = norm_layer(g, u, &format!("{prefix}.bn"), store, mode)?;
        let u = g.swish(u)?;
        let w = bind(g, store, &format!("{prefix}.pw.weight"))?;
        let b = bind(g, store, &format!("{prefix}.pw.bias"))?;
        let u = g.conv2d(u, w, b, ConvCfg::default())?;
        g.dropout(u, spec.dropout_p, DropoutStyle::Channel, mode, Some(rng))?
    };
    let broadcast = g.broadcast_freq(f1, out_f)?;

    match spec.kind {
        BlockKind::Normal => {
            let partial = g.add(x, f2)?;
            g.add(partial, broadcast)
        }
        BlockKind::Transition => g.add(f2, broadcast),
    }
}

pub fn ab_block_forward<T: Scalar>(
    g: &mut Graph<T>,
    x: NodeId,
    spec: &AbBlockSpec,
    prefix: &str,
    store: &mut ParamStore<T>,
    mode: Mode,
    rng: &mut StreamRng,
) -> Result<NodeId> {
    let mut y = bc_resblock_forward(
        g,
        x,
        &spec.leading_spec(),
        &format!("{prefix}.trans"),
        store,
        mode,
        rng,
    )?;
    for i in 1..=spec.n_normal {
        let normal = BcResBlockSpec::normal(spec.out_channels, spec.ssn_groups, spec.dropout_p);
        y = bc_resblock_forward(g, y, &normal, &format!("{prefix}.norm{i}"), store, mode, rng)?;
    }
    if spec.last_conv {
        let w = bind(g, store, &format!("{prefix}.last_conv.weight"))?;
        let b = bind(g, store, &format!("{prefix}.last_conv.bias"))?;
        let (kf, kt) = spec.last_conv_kernel;
        y = g.conv2d(
            y,
            w,
            b,
            ConvCfg {
                stride: (1, 1),
                padding: (kf / 2, kt / 2),
                groups: 1,
            },
        )?;
        y = norm_layer(g, y, &format!("{prefix}.last_bn"), store, mode)?;
        y = g.relu(y)?;
    }
    Ok(y)
}

/// Learnable scalars of one BC ResBlock, from its spec alone.
pub fn bc_resblock_param_count(spec: &BcResBlockSpec) -> usize {
    let c = spec.out_channels;
    let mut total = 0;
    if spec.kind == BlockKind::Transition {
        total += c * spec.in_channels + c; // proj
        total += 2 * c; // proj_bn
    }
    total += 3 * c + c; // dw_f
    total += 2 * c * spec.ssn_groups; // ssn
    total += 3 * c + c; // dw_t
    total += 2 * c; // bn
    total += c * c + c; // pw
    total
}

pub fn ab_block_param_count(spec: &AbBlockSpec) -> usize {
    let mut total = bc_resblock_param_count(&spec.leading_spec());
    let normal = BcResBlockSpec::normal(spec.out_channels, spec.ssn_groups, spec.dropout_p);
    total += spec.n_normal * bc_resblock_param_count(&normal);
    if spec.last_conv {
        let c = spec.out_channels;
        total += c * c * spec.last_conv_kernel.0 * spec.last_conv_kernel.1 + c; // conv
        total += 2 * c; // bn
    }
    total
}
