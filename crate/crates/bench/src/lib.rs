//! Shared fixtures for the criterion benchmarks.

use tornet_core::features::{AudioClip, SAMPLE_RATE};
use tornet_core::{StreamRng, Tensor};

/// A deterministic 10 s noise clip.
pub fn noise_clip(seed: u64) -> AudioClip {
    let mut rng = StreamRng::from_seed(seed).stream("bench/clip");
    let samples: Vec<f32> = (0..160_000)
        .map(|_| rng.uniform_in(-0.5, 0.5) as f32)
        .collect();
    AudioClip::new(samples, SAMPLE_RATE, "bench".to_string()).expect("16 kHz clip")
}

/// A deterministic `[batch, 3, 40, 512]` input.
pub fn input_batch(batch: usize, seed: u64) -> Tensor<f32> {
    let mut rng = StreamRng::from_seed(seed).stream("bench/batch");
    Tensor::from_fn(&[batch, 3, 40, 512], |_| rng.uniform_in(-1.0, 1.0) as f32)
}
