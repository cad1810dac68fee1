//! The gradient-check suite: every differentiable op once, plus one full
//! normal BC ResBlock, each over a configurable number of random seeds.
//! Smooth ops must pass at 1e-5, kinked ops (evaluated away from their
//! kinks) at 1e-4.

use crate::blocks::{bc_resblock_forward, register_bc_resblock, BcResBlockSpec};
use crate::gradcheck::{gradcheck, GradCheckReport, TOL_KINKED, TOL_SMOOTH};
use crate::graph::{Graph, Mode, NodeId};
use crate::ops::{ConvCfg, DropoutStyle, RunningStats};
use crate::param::ParamStore;
use crate::rng::StreamRng;
use crate::tensor::Tensor;

/// Worst case over seeds for one op.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub passed: bool,
    pub seeds: usize,
}

fn rand_tensor(shape: &[usize], rng: &mut StreamRng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform_in(-1.0, 1.0))
}

/// Values with pairwise gaps far above the finite-difference step, so pool
/// argmaxes and relu signs cannot flip under perturbation.
fn well_separated(shape: &[usize], rng: &mut StreamRng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n)
        .map(|i| (i as f64 - n as f64 / 2.0) * 0.37 + rng.uniform_in(-0.05, 0.05))
        .collect();
    rng.shuffle(&mut values);
    Tensor::from_vec(shape, values).expect("shape/values agree")
}

type Builder = Box<dyn Fn(&mut Graph<f64>, &[NodeId]) -> crate::error::Result<NodeId>>;

fn check_over_seeds(
    name: &'static str,
    tolerance: f64,
    seeds: usize,
    make: impl Fn(u64) -> (Vec<Tensor<f64>>, Builder),
) -> SuiteResult {
    let mut worst = 0.0f64;
    let mut all_passed = true;
    for seed in 0..seeds as u64 {
        let (inputs, builder) = make(seed);
        let report: GradCheckReport = gradcheck(name, &inputs, tolerance, |g, ids| builder(g, ids));
        worst = worst.max(report.max_rel_err);
        all_passed &= report.passed;
    }
    SuiteResult {
        name,
        tolerance,
        max_rel_err: worst,
        passed: all_passed,
        seeds,
    }
}

/// Run the whole suite; each op appears exactly once.
pub fn gradcheck_suite(seeds: usize) -> Vec<SuiteResult> {
    let mut results = Vec::new();

    results.push(check_over_seeds("conv2d", TOL_SMOOTH, seeds, |seed| {
        let mut rng = StreamRng::from_seed(seed).stream("suite/conv2d");
        let x = rand_tensor(&[1, 2, 4, 5], &mut rng);
        let w = rand_tensor(&[4, 2, 3, 3], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        (
            vec![x, w, b],
            Box::new(|g, ids| {
                g.conv2d(
                    ids[0],
                    ids[1],
                    ids[2],
                    ConvCfg {
                        stride: (2, 1),
                        padding: (1, 1),
                        groups: 1,
                    },
                )
            }),
        )
    }));

    results.push(check_over_seeds("maxpool2d", TOL_KINKED, seeds, |seed| {
        let mut rng = StreamRng::from_seed(seed).stream("suite/maxpool2d");
        let x = well_separated(&[1, 2, 4, 6], &mut rng);
        (
            vec![x],
            Box::new(|g, ids| g.maxpool2d(ids[0], (2, 2), (2, 2))),
        )
    }));

    results.push(check_over_seeds("freq_avgpool", TOL_SMOOTH, seeds, |seed| {
        let mut rng = StreamRng::from_seed(seed).stream("suite/freq_avgpool");
        let x = rand_tensor(&[2, 2, 5, 4], &mut rng);
        (vec![x], Box::new(|g, ids| g.freq_avgpool(ids[0])))
    }));

    results.push(check_over_seeds(
        "broadcast_freq",
        TOL_SMOOTH,
        seeds,
        |seed| {
            let mut rng = StreamRng::from_seed(seed).stream("suite/broadcast_freq");
            let x = rand_tensor(&[2, 3, 1, 4], &mut rng);
            (vec![x], Box::new(|g, ids| g.broadcast_freq(ids[0], 5)))
        },
    ));

    results.push(check_over_seeds("batchnorm2d", TOL_SMOOTH, seeds, |seed| {
        let mut rng = StreamRng::from_seed(seed).stream("suite/batchnorm2d");
        let x = rand_tensor(&[2, 3, 3, 4], &mut rng);
        let gamma = rand_tensor(&[3], &mut rng);
        let beta = rand_tensor(&[3], &mut rng);
        (
            vec![x, gamma, beta],
            Box::new(|g, ids| {
                let mut running = RunningStats::new(3);
                g.batchnorm2d(ids[0], ids[1], ids[2], &mut running, Mode::Train, 1e-5, 0.1)
            }),
        )
    }));

    results.push(check_over_seeds(
        "subspectral_norm",
        TOL_SMOOTH,
        seeds,
        |seed| {
            let mut rng = StreamRng::from_seed(seed).stream("suite/subspectral_norm");
            let x = rand_tensor(&[2, 2, 6, 3], &mut rng);
            let gamma = rand_tensor(&[2 * 3], &mut rng);
            let beta = rand_tensor(&[2 * 3], &mut rng);
            (
                vec![x, gamma, beta],
                Box::new(|g, ids| {
                    let mut running = RunningStats::new(6);
                    g.subspectral_norm(
                        ids[0],
                        ids[1],
                        ids[2],
                        &mut running,
                        3,
                        Mode::Train,
                        1e-5,
                        0.1,
                    )
                }),
            )
        },
    ));

    results.push(check_over_seeds(
        "freq_instance_norm",
        TOL_SMOOTH,
        seeds,
        |seed| {
            let mut rng = StreamRng::from_seed(seed).stream("suite/freq_instance_norm");
            let x = rand_tensor(&[2, 3, 4, 5], &mut rng);
            (vec![x], Box::new(|g, ids| g.freq_instance_norm(ids[0], 1e-5)))
        },
    ));

    results.push(check_over_seeds("swish", TOL_SMOOTH, seeds, |seed| {
        let mut rng = StreamRng::from_seed(seed).stream("suite/swish");
        let x = rand_tensor(&[17], &mut rng);
        (vec![x], Box::new(|g, ids| g.swish(ids[0])))
    }));

    results.push(check_over_seeds("relu", TOL_KINKED, seeds, |seed| {
        let mut rng = StreamRng::from_seed(seed).stream("suite/relu");
        // inputs bounded away from the kink at zero
        let x = Tensor::from_fn(&[17], |_| {
            let v = rng.uniform_in(0.1, 1.2);
            if rng.bernoulli(0.5) {
                v
            } else {
                -v
            }
        });
        (vec![x], Box::new(|g, ids| g.relu(ids[0])))
    }));

    results.push(check_over_seeds("dropout", TOL_SMOOTH, seeds, |seed| {
        let mut rng = StreamRng::from_seed(seed).stream("suite/dropout");
        let x = rand_tensor(&[2, 3, 2, 4], &mut rng);
        (
            vec![x],
            Box::new(move |g, ids| {
                // the mask stream is re-derived per evaluation, so the mask
                // is fixed and the op is linear
                let mut mask_rng = StreamRng::from_seed(seed).stream("suite/dropout/mask");
                g.dropout(
                    ids[0],
                    0.4,
                    DropoutStyle::Channel,
                    Mode::Train,
                    Some(&mut mask_rng),
                )
            }),
        )
    }));

    results.push(check_over_seeds("linear", TOL_SMOOTH, seeds, |seed| {
        let mut rng = StreamRng::from_seed(seed).stream("suite/linear");
        let x = rand_tensor(&[3, 5], &mut rng);
        let w = rand_tensor(&[4, 5], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        (
            vec![x, w, b],
            Box::new(|g, ids| g.linear(ids[0], ids[1], ids[2])),
        )
    }));

    results.push(check_over_seeds(
        "softmax_cross_entropy",
        TOL_SMOOTH,
        seeds,
        |seed| {
            let mut rng = StreamRng::from_seed(seed).stream("suite/ce");
            let logits = rand_tensor(&[6, 3], &mut rng);
            let labels: Vec<usize> = (0..6).map(|_| rng.index(3)).collect();
            (
                vec![logits],
                Box::new(move |g, ids| g.softmax_cross_entropy(ids[0], &labels, None)),
            )
        },
    ));

    results.push(check_over_seeds(
        "bc_resblock_normal",
        TOL_KINKED,
        seeds,
        |seed| {
            let spec = BcResBlockSpec::normal(3, 2, 0.4);
            let mut store: ParamStore<f64> = ParamStore::new();
            register_bc_resblock(&mut store, "blk", &spec, &StreamRng::from_seed(seed)).unwrap();
            let mut rng = StreamRng::from_seed(seed).stream("suite/block_input");
            let x = rand_tensor(&[2, 3, 4, 5], &mut rng);
            (
                vec![x],
                Box::new(move |g, ids| {
                    let mut store = store.clone();
                    let mut mask_rng = StreamRng::from_seed(seed).stream("suite/block_mask");
                    bc_resblock_forward(
                        g,
                        ids[0],
                        &spec,
                        "blk",
                        &mut store,
                        Mode::Train,
                        &mut mask_rng,
                    )
                }),
            )
        },
    ));

    results
}

pub fn render_suite(results: &[SuiteResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&format!(
            "{} {:<22} max rel err {:.3e} (tolerance {:.0e}, {} seeds)\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.max_rel_err,
            r.tolerance,
            r.seeds
        ));
    }
    out
}
