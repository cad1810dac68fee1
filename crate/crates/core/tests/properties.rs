//! Property tests for invariants that hold over whole input families, not
//! just worked examples.

use proptest::prelude::*;

use tornet_core::features::{standardize_length, AudioClip, SAMPLE_RATE, TARGET_SAMPLES};
use tornet_core::metrics::uar;
use tornet_core::{ConvCfg, DropoutStyle, Graph, Mode, StreamRng, Tensor};

fn tensor4(
    n: usize,
    c: usize,
    f: usize,
    t: usize,
) -> impl Strategy<Value = Tensor<f64>> {
    proptest::collection::vec(-10.0f64..10.0, n * c * f * t)
        .prop_map(move |data| Tensor::from_vec(&[n, c, f, t], data).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A grouped 1x1 conv with groups == channels is a per-channel scalar
    /// multiply (plus bias).
    #[test]
    fn pointwise_depthwise_conv_is_channel_scaling(
        x in tensor4(2, 3, 4, 5),
        w in proptest::collection::vec(-3.0f64..3.0, 3),
        b in proptest::collection::vec(-3.0f64..3.0, 3),
    ) {
        let mut g = Graph::new();
        let xi = g.input(x.clone()).unwrap();
        let wi = g.input(Tensor::from_vec(&[3, 1, 1, 1], w.clone()).unwrap()).unwrap();
        let bi = g.input(Tensor::from_vec(&[3], b.clone()).unwrap()).unwrap();
        let y = g.conv2d(xi, wi, bi, ConvCfg { groups: 3, ..ConvCfg::default() }).unwrap();
        let out = g.value(y);
        for cc in 0..3 {
            for i in 0..20 {
                for n in 0..2 {
                    let idx = (n * 3 + cc) * 20 + i;
                    let expect = x.data()[idx] * w[cc] + b[cc];
                    prop_assert!((out.data()[idx] - expect).abs() < 1e-12);
                }
            }
        }
    }

    /// Averaging over frequency then broadcasting back is a projection:
    /// applying it twice equals applying it once.
    #[test]
    fn avgpool_broadcast_is_a_projection(x in tensor4(1, 2, 6, 7)) {
        let mut g = Graph::new();
        let xi = g.input(x).unwrap();
        let once = {
            let p = g.freq_avgpool(xi).unwrap();
            g.broadcast_freq(p, 6).unwrap()
        };
        let twice = {
            let p = g.freq_avgpool(once).unwrap();
            g.broadcast_freq(p, 6).unwrap()
        };
        prop_assert!(g.value(twice).max_abs_diff(g.value(once)) < 1e-12);
    }

    /// Cross-entropy is invariant under a constant shift of all logits.
    #[test]
    fn cross_entropy_shift_invariance(
        logits in proptest::collection::vec(-30.0f64..30.0, 12),
        shift in -100.0f64..100.0,
        label_bits in proptest::collection::vec(0usize..3, 4),
    ) {
        let base = Tensor::from_vec(&[4, 3], logits.clone()).unwrap();
        let shifted = base.map(|v| v + shift);
        let mut g = Graph::new();
        let a = g.input(base).unwrap();
        let b = g.input(shifted).unwrap();
        let la = g.softmax_cross_entropy(a, &label_bits, None).unwrap();
        let lb = g.softmax_cross_entropy(b, &label_bits, None).unwrap();
        let diff = (g.value(la).data()[0] - g.value(lb).data()[0]).abs();
        prop_assert!(diff < 1e-10, "shift {shift}: diff {diff}");
    }

    /// UAR is invariant under any consistent relabeling of the classes.
    #[test]
    fn uar_relabeling_invariance(
        raw in proptest::collection::vec((0usize..3, 0usize..3), 9..40),
        perm_choice in 0usize..6,
    ) {
        // force every class to appear at least once in the labels
        let mut labels: Vec<usize> = raw.iter().map(|&(l, _)| l).collect();
        let preds: Vec<usize> = raw.iter().map(|&(_, p)| p).collect();
        labels[0] = 0;
        labels[1] = 1;
        labels[2] = 2;
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let perm = perms[perm_choice];
        let base = uar(&labels, &preds, 3).unwrap();
        let labels_p: Vec<usize> = labels.iter().map(|&c| perm[c]).collect();
        let preds_p: Vec<usize> = preds.iter().map(|&c| perm[c]).collect();
        let permuted = uar(&labels_p, &preds_p, 3).unwrap();
        prop_assert!((base - permuted).abs() < 1e-12);
    }

    /// Max pooling agrees with a direct max over each window.
    #[test]
    fn maxpool_matches_window_max(
        x in tensor4(1, 2, 6, 8),
        kf in 1usize..3,
        kt in 1usize..4,
    ) {
        let mut g = Graph::new();
        let xi = g.input(x.clone()).unwrap();
        let y = g.maxpool2d(xi, (kf, kt), (kf, kt)).unwrap();
        let out = g.value(y);
        let (of, ot) = (6 / kf, 8 / kt);
        for c in 0..2 {
            for i in 0..of {
                for j in 0..ot {
                    let mut expect = f64::NEG_INFINITY;
                    for di in 0..kf {
                        for dj in 0..kt {
                            expect = expect.max(x.data()[c * 48 + (i * kf + di) * 8 + j * kt + dj]);
                        }
                    }
                    prop_assert_eq!(out.data()[(c * of + i) * ot + j], expect);
                }
            }
        }
    }

    /// Eval-mode dropout is the identity for any probability.
    #[test]
    fn dropout_eval_is_identity(
        x in tensor4(1, 3, 2, 4),
        p in 0.0f64..0.99,
    ) {
        let mut g = Graph::new();
        let xi = g.input(x).unwrap();
        let y = g.dropout(xi, p, DropoutStyle::Elementwise, Mode::Eval, None).unwrap();
        prop_assert_eq!(y, xi);
    }

    /// Length standardization always yields exactly 10 s, tiling the clip.
    #[test]
    fn standardize_tiles_to_exact_length(
        len in 1usize..400_000,
        seed in 0u64..1000,
    ) {
        let mut rng = StreamRng::from_seed(seed).stream("prop");
        let samples: Vec<f32> = (0..len).map(|_| rng.uniform_in(-1.0, 1.0) as f32).collect();
        let clip = AudioClip::new(samples.clone(), SAMPLE_RATE, "prop".to_string()).unwrap();
        let fixed = standardize_length(&clip).unwrap();
        prop_assert_eq!(fixed.samples.len(), TARGET_SAMPLES);
        for (i, &v) in fixed.samples.iter().take(3 * len).enumerate() {
            prop_assert_eq!(v, samples[i % len]);
        }
    }
}
