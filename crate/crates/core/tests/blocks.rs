//! Block-level tests: sub-spectral norm band arithmetic, frequency instance
//! norm statistics, BC ResBlock identity/decomposition properties, AB block
//! shapes and parameter accounting.

use tornet_core::blocks::{
    ab_block_forward, ab_block_param_count, bc_resblock_forward, bc_resblock_param_count,
    register_ab_block, register_bc_resblock, AbBlockSpec, BcResBlockSpec, BN_EPS, BN_MOMENTUM,
    IN_EPS,
};
use tornet_core::gradcheck::{gradcheck, TOL_KINKED};
use tornet_core::{
    ConvCfg, DropoutStyle, Graph, Mode, NodeId, ParamStore, RunningStats, Scalar, StreamRng,
    Tensor,
};

fn rand_tensor(shape: &[usize], rng: &mut StreamRng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_in(-1.0, 1.0))
}

// ------------------------------------------------------- subspectral_norm --

#[test]
fn ssn_with_one_group_equals_batchnorm() {
    let mut rng = StreamRng::from_seed(40).stream("ssn1");
    let x = rand_tensor(&[2, 3, 4, 5], &mut rng);
    let gamma = rand_tensor(&[3], &mut rng);
    let beta = rand_tensor(&[3], &mut rng);

    let mut g = Graph::new();
    let (xi, gi, bi) = (
        g.input(x.clone()).unwrap(),
        g.input(gamma.clone()).unwrap(),
        g.input(beta.clone()).unwrap(),
    );
    let mut run_a = RunningStats::new(3);
    let bn = g
        .batchnorm2d(xi, gi, bi, &mut run_a, Mode::Train, BN_EPS, BN_MOMENTUM)
        .unwrap();
    let mut run_b = RunningStats::new(3);
    let ssn = g
        .subspectral_norm(xi, gi, bi, &mut run_b, 1, Mode::Train, BN_EPS, BN_MOMENTUM)
        .unwrap();
    assert!(g.value(bn).max_abs_diff(g.value(ssn)) < 1e-6);
    assert_eq!(run_a.mean, run_b.mean);
    assert_eq!(run_a.var, run_b.var);
}

#[test]
fn ssn_constant_input_normalizes_to_zero() {
    let x = Tensor::full(&[2, 2, 4, 3], 5.0f64);
    let mut g = Graph::new();
    let xi = g.input(x).unwrap();
    let gamma = g.input(Tensor::full(&[4], 1.0f64)).unwrap();
    let beta = g.input(Tensor::zeros(&[4])).unwrap();
    let mut running = RunningStats::new(4);
    let y = g
        .subspectral_norm(xi, gamma, beta, &mut running, 2, Mode::Train, BN_EPS, BN_MOMENTUM)
        .unwrap();
    assert!(g.value(y).data().iter().all(|&v| v.abs() < 1e-6));
}

#[test]
fn ssn_normalizes_each_band_independently() {
    // F=4, S=2: band values {0,2} and {10,30}; each band maps to {-1,+1}
    let x = Tensor::from_vec(&[1, 1, 4, 1], vec![0.0, 2.0, 10.0, 30.0]).unwrap();
    let mut g = Graph::new();
    let xi = g.input(x).unwrap();
    let gamma = g.input(Tensor::full(&[2], 1.0f64)).unwrap();
    let beta = g.input(Tensor::zeros(&[2])).unwrap();
    let mut running = RunningStats::new(2);
    let y = g
        .subspectral_norm(xi, gamma, beta, &mut running, 2, Mode::Train, 1e-12, BN_MOMENTUM)
        .unwrap();
    let d = g.value(y).data();
    // band 0: mean 1, std 1; band 1: mean 20, std 10
    assert!((d[0] + 1.0).abs() < 1e-5);
    assert!((d[1] - 1.0).abs() < 1e-5);
    assert!((d[2] + 1.0).abs() < 1e-5);
    assert!((d[3] - 1.0).abs() < 1e-5);
}

#[test]
fn ssn_rejects_non_dividing_groups() {
    let mut g = Graph::<f64>::new();
    let xi = g.input(Tensor::zeros(&[1, 2, 40, 3])).unwrap();
    let gamma = g.input(Tensor::full(&[2 * 7], 1.0f64)).unwrap();
    let beta = g.input(Tensor::zeros(&[2 * 7])).unwrap();
    let mut running = RunningStats::new(2 * 7);
    let err = g
        .subspectral_norm(xi, gamma, beta, &mut running, 7, Mode::Train, BN_EPS, BN_MOMENTUM)
        .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('7') && msg.contains("40"), "got: {msg}");
}

// ---------------------------------------------------- freq_instance_norm --

#[test]
fn freq_in_constant_slices_normalize_to_zero() {
    // constant over (c, t) for each (n, f)
    let x = Tensor::from_fn(&[2, 3, 4, 5], |i| {
        let f = (i / 5) % 4;
        let n = i / (3 * 4 * 5);
        (n * 4 + f) as f64
    });
    let mut g = Graph::new();
    let xi = g.input(x).unwrap();
    let y = g.freq_instance_norm(xi, IN_EPS).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v.abs() < 1e-9));
}

#[test]
fn freq_in_two_values_normalize_to_unit() {
    // per-(n, f) slice holds {1, 3} over (c, t)
    let x = Tensor::from_vec(&[1, 2, 1, 1], vec![1.0, 3.0]).unwrap();
    let mut g = Graph::new();
    let xi = g.input(x).unwrap();
    let y = g.freq_instance_norm(xi, 1e-12).unwrap();
    let d = g.value(y).data();
    assert!((d[0] + 1.0).abs() < 1e-5);
    assert!((d[1] - 1.0).abs() < 1e-5);
}

#[test]
fn freq_in_statistics_oracle() {
    let mut rng = StreamRng::from_seed(41).stream("fin");
    let x = rand_tensor(&[3, 4, 5, 6], &mut rng);
    let (n, c, f, t) = (3usize, 4usize, 5usize, 6usize);

    // direct statistics of the input, per (n, f)
    let slice_stats = |data: &[f64], ni: usize, fi: usize| -> (f64, f64) {
        let mut vals = Vec::with_capacity(c * t);
        for ci in 0..c {
            for ti in 0..t {
                vals.push(data[((ni * c + ci) * f + fi) * t + ti]);
            }
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        (mean, var)
    };

    let mut g = Graph::new();
    let xi = g.input(x.clone()).unwrap();
    let y = g.freq_instance_norm(xi, IN_EPS).unwrap();
    let out = g.value(y).clone();

    for ni in 0..n {
        for fi in 0..f {
            let (_, var_in) = slice_stats(x.data(), ni, fi);
            let (mean_out, var_out) = slice_stats(out.data(), ni, fi);
            assert!(mean_out.abs() < 1e-6, "mean {mean_out}");
            let expect_var = var_in / (var_in + IN_EPS);
            assert!(
                (var_out - expect_var).abs() < 1e-6,
                "var {var_out} vs {expect_var}"
            );
        }
    }
}

// ----------------------------------------------------------- BC ResBlock --

fn fresh_normal_block(
    channels: usize,
    ssn_groups: usize,
    dropout_p: f64,
    seed: u64,
) -> (BcResBlockSpec, ParamStore<f64>) {
    let spec = BcResBlockSpec::normal(channels, ssn_groups, dropout_p);
    let mut store = ParamStore::new();
    register_bc_resblock(&mut store, "blk", &spec, &StreamRng::from_seed(seed)).unwrap();
    (spec, store)
}

#[test]
fn zeroed_residual_branches_make_identity() {
    let (spec, mut store) = fresh_normal_block(4, 2, 0.5, 7);
    // zero the f2 output (SSN affine) and the f1 output (pointwise conv)
    for name in ["blk.ssn.gamma", "blk.ssn.beta", "blk.pw.weight", "blk.pw.bias"] {
        store.by_name_mut(name).unwrap().value.fill(0.0);
    }
    let mut rng = StreamRng::from_seed(1).stream("drop");
    let x = rand_tensor(&[2, 4, 4, 6], &mut StreamRng::from_seed(13).stream("x"));
    let mut g = Graph::new();
    let xi = g.input(x.clone()).unwrap();
    let y = bc_resblock_forward(&mut g, xi, &spec, "blk", &mut store, Mode::Train, &mut rng)
        .unwrap();
    assert_eq!(g.value(y).data(), x.data(), "block must reduce to identity");
}

#[test]
fn normal_block_preserves_shape() {
    let (spec, mut store) = fresh_normal_block(8, 2, 0.1, 3);
    let x = rand_tensor(&[2, 8, 6, 10], &mut StreamRng::from_seed(5).stream("x"));
    let mut rng = StreamRng::from_seed(2).stream("drop");
    let mut g = Graph::new();
    let xi = g.input(x).unwrap();
    let y = bc_resblock_forward(&mut g, xi, &spec, "blk", &mut store, Mode::Train, &mut rng)
        .unwrap();
    assert_eq!(g.value(y).shape(), &[2, 8, 6, 10]);
}

#[test]
fn transition_block_table_shape() {
    // 32 -> 64, stride (2, 1): 32x20x256 -> 64x10x256
    let spec = BcResBlockSpec::transition(32, 64, (2, 1), 5, 0.5);
    let mut store = ParamStore::<f32>::new();
    register_bc_resblock(&mut store, "blk", &spec, &StreamRng::from_seed(11)).unwrap();
    let x = Tensor::<f32>::from_fn(&[1, 32, 20, 256], |i| ((i % 101) as f32 - 50.0) / 50.0);
    let mut rng = StreamRng::from_seed(4).stream("drop");
    let mut g = Graph::new();
    let xi = g.input(x).unwrap();
    let y = bc_resblock_forward(&mut g, xi, &spec, "blk", &mut store, Mode::Eval, &mut rng)
        .unwrap();
    assert_eq!(g.value(y).shape(), &[1, 64, 10, 256]);
}

#[test]
fn block_forward_equals_manual_composition_exactly() {
    let (spec, mut store) = fresh_normal_block(4, 2, 0.5, 21);
    let x = rand_tensor(&[2, 4, 4, 6], &mut StreamRng::from_seed(22).stream("x"));

    let composed = {
        let mut rng = StreamRng::from_seed(30).stream("drop");
        let mut g = Graph::new();
        let xi = g.input(x.clone()).unwrap();
        let y = bc_resblock_forward(&mut g, xi, &spec, "blk", &mut store, Mode::Train, &mut rng)
            .unwrap();
        g.value(y).clone()
    };

    // manual composition of the primitives with the same parameters and the
    // same dropout stream
    let manual = {
        let mut rng = StreamRng::from_seed(30).stream("drop");
        let mut g = Graph::new();
        let xi = g.input(x.clone()).unwrap();
        let bindv = |g: &mut Graph<f64>, store: &ParamStore<f64>, name: &str| -> NodeId {
            let idx = store.index_of(name).unwrap();
            g.param(idx, store.get(idx).value.clone()).unwrap()
        };
        let w = bindv(&mut g, &store, "blk.dw_f.weight");
        let b = bindv(&mut g, &store, "blk.dw_f.bias");
        let f2 = g
            .conv2d(
                xi,
                w,
                b,
                ConvCfg {
                    stride: (1, 1),
                    padding: (1, 0),
                    groups: 4,
                },
            )
            .unwrap();
        let gm = bindv(&mut g, &store, "blk.ssn.gamma");
        let bt = bindv(&mut g, &store, "blk.ssn.beta");
        let mut ssn_stats = RunningStats::new(8);
        let f2 = g
            .subspectral_norm(f2, gm, bt, &mut ssn_stats, 2, Mode::Train, BN_EPS, BN_MOMENTUM)
            .unwrap();
        let u = g.freq_avgpool(f2).unwrap();
        let w = bindv(&mut g, &store, "blk.dw_t.weight");
        let b = bindv(&mut g, &store, "blk.dw_t.bias");
        let u = g
            .conv2d(
                u,
                w,
                b,
                ConvCfg {
                    stride: (1, 1),
                    padding: (0, 1),
                    groups: 4,
                },
            )
            .unwrap();
        let gm = bindv(&mut g, &store, "blk.bn.gamma");
        let bt = bindv(&mut g, &store, "blk.bn.beta");
        let mut bn_stats = RunningStats::new(4);
        let u = g
            .batchnorm2d(u, gm, bt, &mut bn_stats, Mode::Train, BN_EPS, BN_MOMENTUM)
            .unwrap();
        let u = g.swish(u).unwrap();
        let w = bindv(&mut g, &store, "blk.pw.weight");
        let b = bindv(&mut g, &store, "blk.pw.bias");
        let u = g.conv2d(u, w, b, ConvCfg::default()).unwrap();
        let u = g
            .dropout(u, 0.5, DropoutStyle::Channel, Mode::Train, Some(&mut rng))
            .unwrap();
        let bc = g.broadcast_freq(u, 4).unwrap();
        let partial = g.add(xi, f2).unwrap();
        let y = g.add(partial, bc).unwrap();
        g.value(y).clone()
    };

    assert_eq!(composed.data(), manual.data(), "decomposition must be exact");
}

#[test]
fn broadcast_term_is_frequency_constant() {
    let (spec, mut store) = fresh_normal_block(3, 1, 0.2, 33);
    // zero x and the f2 affine: only the broadcast term survives
    for name in ["blk.ssn.gamma", "blk.ssn.beta"] {
        store.by_name_mut(name).unwrap().value.fill(0.0);
    }
    let x = Tensor::<f64>::zeros(&[2, 3, 5, 7]);
    let mut rng = StreamRng::from_seed(44).stream("drop");
    let mut g = Graph::new();
    let xi = g.input(x).unwrap();
    let y = bc_resblock_forward(&mut g, xi, &spec, "blk", &mut store, Mode::Train, &mut rng)
        .unwrap();
    let out = g.value(y);
    let (f, t) = (5usize, 7usize);
    for n in 0..2 {
        for c in 0..3 {
            let base = (n * 3 + c) * f * t;
            let first_row = &out.data()[base..base + t];
            for fi in 1..f {
                let row = &out.data()[base + fi * t..base + (fi + 1) * t];
                assert_eq!(row, first_row, "n={n} c={c} f={fi}");
            }
        }
    }
}

#[test]
fn eval_mode_forward_is_deterministic() {
    let (spec, mut store) = fresh_normal_block(4, 2, 0.5, 50);
    let x = rand_tensor(&[1, 4, 4, 8], &mut StreamRng::from_seed(51).stream("x"));
    let mut out = Vec::new();
    for _ in 0..2 {
        let mut rng = StreamRng::from_seed(0).stream("unused");
        let mut g = Graph::new();
        let xi = g.input(x.clone()).unwrap();
        let y = bc_resblock_forward(&mut g, xi, &spec, "blk", &mut store, Mode::Eval, &mut rng)
            .unwrap();
        out.push(g.value(y).clone());
    }
    assert_eq!(out[0].data(), out[1].data());
}

#[test]
fn gradcheck_through_normal_block() {
    // dropout off so the block is a deterministic function of its inputs
    let (spec, store) = fresh_normal_block(3, 2, 0.0, 60);
    let x = rand_tensor(&[2, 3, 4, 5], &mut StreamRng::from_seed(61).stream("x"));
    let spec = spec.clone();
    let report = gradcheck("bc_resblock_input", &[x], TOL_KINKED, move |g, ids| {
        let mut store = store.clone();
        let mut rng = StreamRng::from_seed(0).stream("unused");
        bc_resblock_forward(g, ids[0], &spec, "blk", &mut store, Mode::Train, &mut rng)
    });
    assert!(report.passed, "max rel err {}", report.max_rel_err);
}

// ---------------------------------------------------------------- AB Block --

#[test]
fn ab_block_table_shape() {
    // 32 -> 64, stride (2, 1), n_normal 1, last conv: 32x20x256 -> 64x10x256
    let spec = AbBlockSpec::new(32, 64, (2, 1), 1, true, 5, 0.5);
    let mut store = ParamStore::<f32>::new();
    register_ab_block(&mut store, "ab", &spec, &StreamRng::from_seed(70)).unwrap();
    let x = Tensor::<f32>::from_fn(&[1, 32, 20, 256], |i| ((i % 37) as f32 - 18.0) / 20.0);
    let mut rng = StreamRng::from_seed(71).stream("drop");
    let mut g = Graph::new();
    let xi = g.input(x).unwrap();
    let y = ab_block_forward(&mut g, xi, &spec, "ab", &mut store, Mode::Eval, &mut rng).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 64, 10, 256]);
}

fn registered_param_count<T: Scalar>(store: &ParamStore<T>) -> usize {
    store.scalar_count()
}

#[test]
fn ab_block_param_count_matches_registration() {
    for (cin, cout, stride, n_normal, last_conv) in [
        (32, 64, (2, 1), 1, true),
        (64, 128, (2, 1), 0, true),
        (128, 256, (1, 1), 1, false),
        (256, 512, (1, 1), 2, true),
    ] {
        let spec = AbBlockSpec::new(cin, cout, stride, n_normal, last_conv, 5, 0.5);
        let mut store = ParamStore::<f32>::new();
        register_ab_block(&mut store, "ab", &spec, &StreamRng::from_seed(1)).unwrap();
        assert_eq!(
            registered_param_count(&store),
            ab_block_param_count(&spec),
            "{cin}->{cout} n_normal={n_normal} last_conv={last_conv}"
        );
    }
}

#[test]
fn last_conv_removal_drops_exactly_9cc_plus_3c() {
    // counting oracle: a 3x3 conv c->c with bias plus its BN costs 9c^2 + 3c
    for c in [64usize, 128, 256, 512] {
        let with = AbBlockSpec::new(c / 2, c, (2, 1), 1, true, 5, 0.5);
        let without = AbBlockSpec::new(c / 2, c, (2, 1), 1, false, 5, 0.5);
        let gap = ab_block_param_count(&with) - ab_block_param_count(&without);
        assert_eq!(gap, 9 * c * c + 3 * c, "c = {c}");
    }
}

#[test]
fn removing_normal_blocks_drops_their_exact_cost() {
    let c = 64usize;
    let one = AbBlockSpec::new(32, c, (2, 1), 1, true, 5, 0.5);
    let zero = AbBlockSpec::new(32, c, (2, 1), 0, true, 5, 0.5);
    let gap = ab_block_param_count(&one) - ab_block_param_count(&zero);
    let normal = BcResBlockSpec::normal(c, 5, 0.5);
    assert_eq!(gap, bc_resblock_param_count(&normal));
    // c^2 from the pointwise conv plus the per-channel terms
    assert_eq!(gap, c * c + 21 * c);
}
