//! The full network: stage 1 (3x3 conv + 2x2 maxpool), two residual stages
//! of AB Blocks with batch-normed maxpool shortcuts and frequency instance
//! norm, and a two-layer classification head applied per time frame.

use crate::blocks::{
    ab_block_forward, ab_block_param_count, register_ab_block, AbBlockSpec, BN_EPS, BN_MOMENTUM,
    IN_EPS,
};
use crate::error::{Error, Result};
use crate::graph::{Graph, Mode, NodeId};
use crate::ops::{out_extent, ConvCfg, DropoutStyle};
use crate::param::{bind, kaiming_uniform, ParamStore};
use crate::rng::StreamRng;
use crate::tensor::{Scalar, Tensor};

/// Architectural description from which the network, its parameter count and
/// its shape trace are derived.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: String,
    pub in_channels: usize,
    pub n_mels: usize,
    pub n_frames: usize,
    pub n_classes: usize,
    pub stage1_channels: usize,
    pub stage2: Vec<AbBlockSpec>,
    pub stage3: Vec<AbBlockSpec>,
    pub use_instance_norm: bool,
    pub head_hidden: usize,
    pub head_dropout: f64,
}

/// Variant knobs for the ablation grid.
#[derive(Debug, Clone, Copy)]
struct VariantFlags {
    use_instance_norm: bool,
    use_last_conv: bool,
    n_normal: usize,
}

pub const DEFAULT_SSN_GROUPS: usize = 5;
/// Channel dropout inside BC ResBlocks.
pub const DEFAULT_BLOCK_DROPOUT: f64 = 0.5;

impl ModelConfig {
    fn with_flags(name: &str, flags: VariantFlags) -> ModelConfig {
        let ab = |cin, cout, stride| {
            AbBlockSpec::new(
                cin,
                cout,
                stride,
                flags.n_normal,
                flags.use_last_conv,
                DEFAULT_SSN_GROUPS,
                DEFAULT_BLOCK_DROPOUT,
            )
        };
        ModelConfig {
            variant: name.to_string(),
            in_channels: 3,
            n_mels: 40,
            n_frames: 512,
            n_classes: 2,
            stage1_channels: 32,
            stage2: vec![ab(32, 64, (2, 1)), ab(64, 128, (2, 1))],
            stage3: vec![ab(128, 256, (1, 1)), ab(256, 512, (1, 1))],
            use_instance_norm: flags.use_instance_norm,
            head_hidden: 128,
            head_dropout: 0.5,
        }
    }

    /// The default network: instance norm on, one normal block per AB block,
    /// trailing convs on.
    pub fn tornet() -> ModelConfig {
        ModelConfig::with_flags(
            "default",
            VariantFlags {
                use_instance_norm: true,
                use_last_conv: true,
                n_normal: 1,
            },
        )
    }

    pub fn variant(name: &str) -> Result<ModelConfig> {
        let flags = match name {
            "default" | "with-instancenorm" => VariantFlags {
                use_instance_norm: true,
                use_last_conv: true,
                n_normal: 1,
            },
            "no-instancenorm" => VariantFlags {
                use_instance_norm: false,
                use_last_conv: true,
                n_normal: 1,
            },
            "no-last-conv" => VariantFlags {
                use_instance_norm: true,
                use_last_conv: false,
                n_normal: 1,
            },
            "only-transition" => VariantFlags {
                use_instance_norm: true,
                use_last_conv: true,
                n_normal: 0,
            },
            other => {
                return Err(Error::config(format!(
                    "unknown variant '{other}'; known: default, no-instancenorm, no-last-conv, only-transition"
                )))
            }
        };
        Ok(ModelConfig::with_flags(name, flags))
    }

    /// The four ablation rows: flags differ, nothing else.
    pub fn ablation_configs() -> Vec<ModelConfig> {
        ["no-last-conv", "only-transition", "no-instancenorm", "default"]
            .iter()
            .map(|name| ModelConfig::variant(name).expect("built-in variant"))
            .collect()
    }
}

fn block_to_string(s: &AbBlockSpec) -> String {
    format!(
        "{}:{}:{}:{}:{}:{}:{}:{}",
        s.in_channels,
        s.out_channels,
        s.stride.0,
        s.stride.1,
        s.n_normal,
        s.last_conv,
        s.ssn_groups,
        s.dropout_p
    )
}

fn block_from_string(text: &str) -> Result<AbBlockSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 8 {
        return Err(Error::config(format!("malformed block spec '{text}'")));
    }
    let p = |i: usize| -> Result<usize> {
        parts[i]
            .parse()
            .map_err(|_| Error::config(format!("malformed block spec '{text}'")))
    };
    let mut spec = AbBlockSpec::new(
        p(0)?,
        p(1)?,
        (p(2)?, p(3)?),
        p(4)?,
        parts[5] == "true",
        p(6)?,
        parts[7]
            .parse()
            .map_err(|_| Error::config(format!("malformed block spec '{text}'")))?,
    );
    spec.last_conv_kernel = (3, 3);
    Ok(spec)
}

/// Flatten a config into `key = value` pairs for checkpoint metadata.
pub fn config_to_kv(c: &ModelConfig) -> Vec<(String, String)> {
    let blocks = |specs: &[AbBlockSpec]| {
        specs
            .iter()
            .map(block_to_string)
            .collect::<Vec<_>>()
            .join(",")
    };
    vec![
        ("model.variant".into(), c.variant.clone()),
        ("model.in_channels".into(), c.in_channels.to_string()),
        ("model.n_mels".into(), c.n_mels.to_string()),
        ("model.n_frames".into(), c.n_frames.to_string()),
        ("model.n_classes".into(), c.n_classes.to_string()),
        ("model.stage1_channels".into(), c.stage1_channels.to_string()),
        ("model.stage2".into(), blocks(&c.stage2)),
        ("model.stage3".into(), blocks(&c.stage3)),
        (
            "model.use_instance_norm".into(),
            c.use_instance_norm.to_string(),
        ),
        ("model.head_hidden".into(), c.head_hidden.to_string()),
        ("model.head_dropout".into(), c.head_dropout.to_string()),
    ]
}

/// Rebuild a config from checkpoint metadata.
pub fn config_from_kv(get: &dyn Fn(&str) -> Option<String>) -> Result<ModelConfig> {
    let need = |key: &str| -> Result<String> {
        get(key).ok_or_else(|| Error::config(format!("checkpoint metadata missing '{key}'")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        need(key)?
            .parse()
            .map_err(|_| Error::config(format!("metadata '{key}' is not an integer")))
    };
    let blocks = |key: &str| -> Result<Vec<AbBlockSpec>> {
        need(key)?.split(',').map(block_from_string).collect()
    };
    Ok(ModelConfig {
        variant: need("model.variant")?,
        in_channels: parse_usize("model.in_channels")?,
        n_mels: parse_usize("model.n_mels")?,
        n_frames: parse_usize("model.n_frames")?,
        n_classes: parse_usize("model.n_classes")?,
        stage1_channels: parse_usize("model.stage1_channels")?,
        stage2: blocks("model.stage2")?,
        stage3: blocks("model.stage3")?,
        use_instance_norm: need("model.use_instance_norm")? == "true",
        head_hidden: parse_usize("model.head_hidden")?,
        head_dropout: need("model.head_dropout")?
            .parse()
            .map_err(|_| Error::config("metadata 'model.head_dropout' is not a number".to_string()))?,
    })
}

/// One line of the layer trace: mirrors the stage table's columns plus a
/// parameter count.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub name: String,
    pub operator: String,
    pub stride: String,
    /// Output shape without the batch axis.
    pub output: Vec<usize>,
    pub params: usize,
}

impl TraceRow {
    pub fn output_string(&self) -> String {
        self.output
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTrace {
    pub rows: Vec<TraceRow>,
}

impl ShapeTrace {
    /// Rows belonging to the stage table (conv/maxpool/AB Block/IN).
    pub fn stage_rows(&self) -> Vec<&TraceRow> {
        self.rows
            .iter()
            .filter(|r| {
                matches!(
                    r.operator.as_str(),
                    "conv2d 3x3" | "maxpool 2x2" | "AB Block" | "IN"
                )
            })
            .collect()
    }

    pub fn total_params(&self) -> usize {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<18} {:<12} {:^8} {:<14} {:>10}\n",
            "name", "operator", "stride", "output", "params"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<18} {:<12} {:^8} {:<14} {:>10}\n",
                r.name,
                r.operator,
                r.stride,
                r.output_string(),
                r.params
            ));
        }
        out
    }
}

fn stride_string(stride: (usize, usize)) -> String {
    if stride.0 == stride.1 {
        format!("{}", stride.0)
    } else {
        format!("({}, {})", stride.0, stride.1)
    }
}

/// Shortcut pooling factor for one residual stage, from its input and output
/// grids; errors if the main path's grid is not an integer divisor.
fn shortcut_pool(
    stage: &str,
    f_in: usize,
    t_in: usize,
    f_out: usize,
    t_out: usize,
) -> Result<(usize, usize)> {
    if f_out == 0 || t_out == 0 || !f_in.is_multiple_of(f_out) || !t_in.is_multiple_of(t_out) {
        return Err(Error::config(format!(
            "{stage}: shortcut cannot pool {f_in}x{t_in} onto {f_out}x{t_out}"
        )));
    }
    Ok((f_in / f_out, t_in / t_out))
}

struct StagePlan {
    trace: ShapeTrace,
    /// (channels, F, T) after each residual stage.
    stage2_out: (usize, usize, usize),
    stage3_out: (usize, usize, usize),
    stage2_pool: (usize, usize),
    stage3_pool: (usize, usize),
    pre_head: (usize, usize), // (time, channels*freq)
}

/// Walk the configured chain symbolically; errors name the first layer whose
/// shapes break.
fn plan(config: &ModelConfig) -> Result<StagePlan> {
    if config.n_classes < 2 {
        return Err(Error::config("n_classes must be >= 2".to_string()));
    }
    let mut rows = Vec::new();
    let (mut f, mut t) = (config.n_mels, config.n_frames);
    let c1 = config.stage1_channels;

    // stage 1: conv 3x3 stride 1 padding 1 (shape preserved) + BN
    rows.push(TraceRow {
        name: "stage1.conv".to_string(),
        operator: "conv2d 3x3".to_string(),
        stride: "1".to_string(),
        output: vec![c1, f, t],
        params: c1 * config.in_channels * 9 + c1 + 2 * c1,
    });
    let pool_err = |name: &str, f: usize, t: usize| {
        Error::config(format!("{name}: 2x2 maxpool cannot halve {f}x{t}"))
    };
    if f < 2 || t < 2 {
        return Err(pool_err("stage1.maxpool", f, t));
    }
    f = (f - 2) / 2 + 1;
    t = (t - 2) / 2 + 1;
    rows.push(TraceRow {
        name: "stage1.maxpool".to_string(),
        operator: "maxpool 2x2".to_string(),
        stride: "2".to_string(),
        output: vec![c1, f, t],
        params: 0,
    });

    let walk_stage = |rows: &mut Vec<TraceRow>,
                          stage_name: &str,
                          specs: &[AbBlockSpec],
                          c_in: usize,
                          f_in: usize,
                          t_in: usize|
     -> Result<(usize, usize, usize)> {
        let (mut c, mut f, mut t) = (c_in, f_in, t_in);
        for (i, spec) in specs.iter().enumerate() {
            let name = format!("{stage_name}.ab{}", i + 1);
            if spec.in_channels != c {
                return Err(Error::config(format!(
                    "{name}: expects {} input channels, chain carries {}",
                    spec.in_channels, c
                )));
            }
            // frequency stride sits in the 3x1 depthwise conv (padding 1)
            let f_next = out_extent(f, 3, spec.stride.0, 1).ok_or_else(|| {
                Error::config(format!("{name}: stride {:?} does not fit F={f}", spec.stride))
            })?;
            let t_next = out_extent(t, 3, spec.stride.1, 1).ok_or_else(|| {
                Error::config(format!("{name}: stride {:?} does not fit T={t}", spec.stride))
            })?;
            if f_next % spec.ssn_groups != 0 {
                return Err(Error::config(format!(
                    "{name}: {} SSN sub-bands do not divide frequency dimension {}",
                    spec.ssn_groups, f_next
                )));
            }
            c = spec.out_channels;
            f = f_next;
            t = t_next;
            rows.push(TraceRow {
                name,
                operator: "AB Block".to_string(),
                stride: stride_string(spec.stride),
                output: vec![c, f, t],
                params: ab_block_param_count(spec),
            });
        }
        Ok((c, f, t))
    };

    let (c2_in, f2_in, t2_in) = (c1, f, t);
    let (c2, f2, t2) = walk_stage(&mut rows, "stage2", &config.stage2, c2_in, f2_in, t2_in)?;
    let stage2_pool = shortcut_pool("stage2.shortcut", f2_in, t2_in, f2, t2)?;
    rows.push(TraceRow {
        name: "stage2.shortcut".to_string(),
        operator: "shortcut".to_string(),
        stride: "-".to_string(),
        output: vec![c2, f2, t2],
        params: c2 * c2_in + c2 + 2 * c2,
    });
    if config.use_instance_norm {
        rows.push(TraceRow {
            name: "stage2.in".to_string(),
            operator: "IN".to_string(),
            stride: "-".to_string(),
            output: vec![c2, f2, t2],
            params: 0,
        });
    }

    let (c3, f3, t3) = walk_stage(&mut rows, "stage3", &config.stage3, c2, f2, t2)?;
    let stage3_pool = shortcut_pool("stage3.shortcut", f2, t2, f3, t3)?;
    rows.push(TraceRow {
        name: "stage3.shortcut".to_string(),
        operator: "shortcut".to_string(),
        stride: "-".to_string(),
        output: vec![c3, f3, t3],
        params: c3 * c2 + c3 + 2 * c3,
    });
    if config.use_instance_norm {
        rows.push(TraceRow {
            name: "stage3.in".to_string(),
            operator: "IN".to_string(),
            stride: "-".to_string(),
            output: vec![c3, f3, t3],
            params: 0,
        });
    }

    // head: [C, F, T] -> [T, C*F] per image, FC per frame, mean over time
    let flat = c3 * f3;
    rows.push(TraceRow {
        name: "head.reshape".to_string(),
        operator: "reshape".to_string(),
        stride: "-".to_string(),
        output: vec![t3, flat],
        params: 0,
    });
    rows.push(TraceRow {
        name: "head.fc1".to_string(),
        operator: "linear".to_string(),
        stride: "-".to_string(),
        output: vec![t3, config.head_hidden],
        params: config.head_hidden * flat + config.head_hidden,
    });
    rows.push(TraceRow {
        name: "head.fc2".to_string(),
        operator: "linear".to_string(),
        stride: "-".to_string(),
        output: vec![config.n_classes],
        params: config.n_classes * config.head_hidden + config.n_classes,
    });

    Ok(StagePlan {
        trace: ShapeTrace { rows },
        stage2_out: (c2, f2, t2),
        stage3_out: (c3, f3, t3),
        stage2_pool,
        stage3_pool,
        pre_head: (t3, flat),
    })
}

/// A built network: config plus named parameters.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub config: ModelConfig,
    pub store: ParamStore<T>,
    pub seed: u64,
}

/// Validate the config, then initialize every parameter from `seed`.
/// Two builds with the same seed are bitwise identical.
pub fn build_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Model<T>> {
    let plan_info = plan(config)?;
    let root = StreamRng::from_seed(seed);
    let mut store = ParamStore::new();

    let c1 = config.stage1_channels;
    let w_name = "stage1.conv.weight";
    store.register(
        w_name,
        kaiming_uniform(&[c1, config.in_channels, 3, 3], config.in_channels * 9, w_name, &root),
    )?;
    store.register("stage1.conv.bias", Tensor::zeros(&[c1]))?;
    store.register("stage1.bn.gamma", Tensor::full(&[c1], T::ONE))?;
    store.register("stage1.bn.beta", Tensor::zeros(&[c1]))?;
    store.register_buffer("stage1.bn", c1)?;

    let register_stage = |store: &mut ParamStore<T>,
                              stage_name: &str,
                              specs: &[AbBlockSpec],
                              shortcut_in: usize,
                              shortcut_out: usize|
     -> Result<()> {
        for (i, spec) in specs.iter().enumerate() {
            register_ab_block(store, &format!("{stage_name}.ab{}", i + 1), spec, &root)?;
        }
        let name = format!("{stage_name}.shortcut.conv.weight");
        store.register(
            &name,
            kaiming_uniform(&[shortcut_out, shortcut_in, 1, 1], shortcut_in, &name, &root),
        )?;
        store.register(
            &format!("{stage_name}.shortcut.conv.bias"),
            Tensor::zeros(&[shortcut_out]),
        )?;
        store.register(
            &format!("{stage_name}.shortcut.bn.gamma"),
            Tensor::full(&[shortcut_out], T::ONE),
        )?;
        store.register(
            &format!("{stage_name}.shortcut.bn.beta"),
            Tensor::zeros(&[shortcut_out]),
        )?;
        store.register_buffer(&format!("{stage_name}.shortcut.bn"), shortcut_out)?;
        Ok(())
    };
    register_stage(&mut store, "stage2", &config.stage2, c1, plan_info.stage2_out.0)?;
    register_stage(
        &mut store,
        "stage3",
        &config.stage3,
        plan_info.stage2_out.0,
        plan_info.stage3_out.0,
    )?;

    let (_, flat) = plan_info.pre_head;
    let name = "head.fc1.weight";
    store.register(
        name,
        kaiming_uniform(&[config.head_hidden, flat], flat, name, &root),
    )?;
    store.register("head.fc1.bias", Tensor::zeros(&[config.head_hidden]))?;
    let name = "head.fc2.weight";
    store.register(
        name,
        kaiming_uniform(&[config.n_classes, config.head_hidden], config.head_hidden, name, &root),
    )?;
    store.register("head.fc2.bias", Tensor::zeros(&[config.n_classes]))?;

    Ok(Model {
        config: config.clone(),
        store,
        seed,
    })
}

impl<T: Scalar> Model<T> {
    /// Layer-by-layer trace of the configured chain.
    pub fn shape_trace(&self) -> Result<ShapeTrace> {
        Ok(plan(&self.config)?.trace)
    }

    /// Exact count of learnable scalars (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Per-prefix parameter counts: (stage1, stage2, stage3, head).
    pub fn param_breakdown(&self) -> Vec<(String, usize)> {
        let mut groups: Vec<(String, usize)> = Vec::new();
        for p in self.store.params() {
            let prefix = p.name.split('.').next().unwrap_or("other").to_string();
            match groups.iter_mut().find(|(name, _)| *name == prefix) {
                Some((_, count)) => *count += p.value.len(),
                None => groups.push((prefix, p.value.len())),
            }
        }
        groups
    }

    /// Build the forward graph from an already-inserted input node and return
    /// the logits node.
    pub fn forward_graph(
        &mut self,
        g: &mut Graph<T>,
        x: NodeId,
        mode: Mode,
        rng: &mut StreamRng,
    ) -> Result<NodeId> {
        let plan_info = plan(&self.config)?;
        let shape = g.value(x).shape().to_vec();
        let expect = [
            self.config.in_channels,
            self.config.n_mels,
            self.config.n_frames,
        ];
        if shape.len() != 4 || shape[1..] != expect {
            return Err(Error::shape(
                "forward",
                format!("stage1: batch {shape:?} does not match input spec {expect:?}"),
            ));
        }
        let batch = shape[0];
        let store = &mut self.store;

        // stage 1
        let w = bind(g, store, "stage1.conv.weight")?;
        let b = bind(g, store, "stage1.conv.bias")?;
        let mut y = g.conv2d(
            x,
            w,
            b,
            ConvCfg {
                stride: (1, 1),
                padding: (1, 1),
                groups: 1,
            },
        )?;
        {
            let gamma = bind(g, store, "stage1.bn.gamma")?;
            let beta = bind(g, store, "stage1.bn.beta")?;
            let buf = store.buffer_index_of("stage1.bn")?;
            y = g.batchnorm2d(y, gamma, beta, store.buffer_mut(buf), mode, BN_EPS, BN_MOMENTUM)?;
        }
        y = g.relu(y)?;
        y = g.maxpool2d(y, (2, 2), (2, 2))?;

        // residual stages
        let residual_stage = |g: &mut Graph<T>,
                                  store: &mut ParamStore<T>,
                                  stage_name: &str,
                                  specs: &[AbBlockSpec],
                                  entry: NodeId,
                                  pool: (usize, usize),
                                  rng: &mut StreamRng|
         -> Result<NodeId> {
            let mut main = entry;
            for (i, spec) in specs.iter().enumerate() {
                main = ab_block_forward(
                    g,
                    main,
                    spec,
                    &format!("{stage_name}.ab{}", i + 1),
                    store,
                    mode,
                    rng,
                )?;
            }
            let w = bind(g, store, &format!("{stage_name}.shortcut.conv.weight"))?;
            let b = bind(g, store, &format!("{stage_name}.shortcut.conv.bias"))?;
            let mut sc = g.conv2d(entry, w, b, ConvCfg::default())?;
            {
                let gamma = bind(g, store, &format!("{stage_name}.shortcut.bn.gamma"))?;
                let beta = bind(g, store, &format!("{stage_name}.shortcut.bn.beta"))?;
                let buf = store.buffer_index_of(&format!("{stage_name}.shortcut.bn"))?;
                sc = g.batchnorm2d(
                    sc,
                    gamma,
                    beta,
                    store.buffer_mut(buf),
                    mode,
                    BN_EPS,
                    BN_MOMENTUM,
                )?;
            }
            if pool != (1, 1) {
                sc = g.maxpool2d(sc, pool, pool)?;
            }
            g.add(main, sc)
        };

        y = residual_stage(g, store, "stage2", &self.config.stage2.clone(), y, plan_info.stage2_pool, rng)?;
        if self.config.use_instance_norm {
            y = g.freq_instance_norm(y, IN_EPS)?;
        }
        y = residual_stage(g, store, "stage3", &self.config.stage3.clone(), y, plan_info.stage3_pool, rng)?;
        if self.config.use_instance_norm {
            y = g.freq_instance_norm(y, IN_EPS)?;
        }

        // head: [B, C, F, T] -> [B, T, C*F], FC per frame, mean over time
        let (time, flat) = plan_info.pre_head;
        y = g.permute(y, &[0, 3, 1, 2])?;
        y = g.reshape(y, &[batch, time, flat])?;
        let w = bind(g, store, "head.fc1.weight")?;
        let b = bind(g, store, "head.fc1.bias")?;
        y = g.linear(y, w, b)?;
        y = g.relu(y)?;
        y = g.dropout(
            y,
            self.config.head_dropout,
            DropoutStyle::Elementwise,
            mode,
            Some(rng),
        )?;
        y = g.mean_axis(y, 1)?;
        let w = bind(g, store, "head.fc2.weight")?;
        let b = bind(g, store, "head.fc2.bias")?;
        g.linear(y, w, b)
    }

    /// Run one batch and return the logits.
    pub fn forward(
        &mut self,
        batch: &Tensor<T>,
        mode: Mode,
        rng: &mut StreamRng,
    ) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let x = g.input(batch.clone())?;
        let logits = self.forward_graph(&mut g, x, mode, rng)?;
        Ok(g.value(logits).clone())
    }

    /// Scatter leaf gradients from a finished backward pass into the store.
    pub fn apply_gradients(
        &mut self,
        graph: &Graph<T>,
        grads: &mut crate::graph::Gradients<T>,
    ) -> Result<()> {
        for &(node, idx) in graph.param_leaves() {
            if let Some(g) = grads.take(node) {
                self.store.get_mut(idx).grad.add_assign(&g)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ablation_grid_has_expected_flags() {
        let configs = ModelConfig::ablation_configs();
        assert_eq!(configs.len(), 4);
        let default = configs.iter().find(|c| c.variant == "default").unwrap();
        assert!(default.use_instance_norm);
        let only_trans = configs
            .iter()
            .find(|c| c.variant == "only-transition")
            .unwrap();
        assert!(only_trans.stage2.iter().all(|s| s.n_normal == 0));
        let no_last = configs.iter().find(|c| c.variant == "no-last-conv").unwrap();
        assert!(no_last.stage2.iter().all(|s| !s.last_conv));
        let no_in = configs
            .iter()
            .find(|c| c.variant == "no-instancenorm")
            .unwrap();
        assert!(!no_in.use_instance_norm);
    }

    #[test]
    fn single_conv_param_count_oracle() {
        // one 3x3 conv, 3 -> 32, with bias: 32*3*9 + 32 = 896
        let config = ModelConfig::tornet();
        let trace = plan(&config).unwrap().trace;
        let conv_row = &trace.rows[0];
        // stage1 row carries conv + BN: 896 + 64
        assert_eq!(conv_row.params, 896 + 64);
    }

    #[test]
    fn invalid_stride_chain_is_rejected() {
        let mut config = ModelConfig::tornet();
        config.stage2[0].stride = (3, 1); // F: 20 -> 7, not divisible by 5 bands
        let err = build_model::<f32>(&config, 1).unwrap_err();
        assert!(err.to_string().contains("stage2.ab1"), "{err}");
    }

    #[test]
    fn builds_are_seed_deterministic() {
        let config = ModelConfig::tornet();
        let a = build_model::<f32>(&config, 7).unwrap();
        let b = build_model::<f32>(&config, 7).unwrap();
        for (pa, pb) in a.store.params().iter().zip(b.store.params()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value.data(), pb.value.data(), "{}", pa.name);
        }
        let c = build_model::<f32>(&config, 8).unwrap();
        let delta: f32 = a
            .store
            .by_name("stage1.conv.weight")
            .unwrap()
            .value
            .data()
            .iter()
            .zip(c.store.by_name("stage1.conv.weight").unwrap().value.data())
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(delta > 0.0);
    }
}
