use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use tornet_bench::input_batch;
use tornet_core::network::{build_model, ModelConfig};
use tornet_core::{Graph, Mode, StreamRng};

fn bench_network(c: &mut Criterion) {
    let mut model = build_model(&ModelConfig::tornet(), 7).unwrap();
    let single = input_batch(1, 3);

    let mut group = c.benchmark_group("network");
    group.sample_size(10);

    group.bench_function("forward_eval_b1", |b| {
        let mut rng = StreamRng::from_seed(0).stream("unused");
        b.iter(|| {
            model
                .forward(black_box(&single), Mode::Eval, &mut rng)
                .unwrap()
        })
    });

    group.bench_function("train_step_b4", |b| {
        let batch = input_batch(4, 5);
        let labels = [0usize, 1, 0, 1];
        b.iter(|| {
            let mut rng = StreamRng::from_seed(1).stream("dropout");
            model.store.zero_grads();
            let mut g = Graph::new();
            let x = g.input(batch.clone()).unwrap();
            let logits = model.forward_graph(&mut g, x, Mode::Train, &mut rng).unwrap();
            let loss = g.softmax_cross_entropy(logits, &labels, None).unwrap();
            let mut grads = g.backward(loss).unwrap();
            model.apply_gradients(&g, &mut grads).unwrap();
        })
    });

    group.finish();
}

criterion_group!(benches, bench_network);
criterion_main!(benches);
