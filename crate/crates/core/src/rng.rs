//! Seeded, named-stream random number generation.
//!
//! Every source of randomness in the crate (weight init, dropout masks,
//! shuffling, synthetic audio, bootstrap resampling) flows from one 64-bit
//! seed through named streams. A stream is derived as a pure function of
//! `(seed, name)`, so any component can be reproduced in isolation without
//! replaying the draws that other components made.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// FNV-1a over the stream name; mixes the name into the root seed.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates derived seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic RNG addressed by `(root seed, stream name)`.
#[derive(Debug, Clone)]
pub struct StreamRng {
    root: u64,
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn from_seed(seed: u64) -> Self {
        StreamRng {
            root: seed,
            inner: ChaCha8Rng::seed_from_u64(splitmix64(seed)),
        }
    }

    /// Derive an independent child stream. Children of the same parent with
    /// the same name are identical; distinct names give unrelated streams.
    pub fn stream(&self, name: &str) -> StreamRng {
        let child = splitmix64(self.root ^ fnv1a64(name.as_bytes()));
        StreamRng {
            root: child,
            inner: ChaCha8Rng::seed_from_u64(child),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_f64()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random_bool(p.clamp(0.0, 1.0))
    }

    /// Uniform index in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_f64().max(f64::MIN_POSITIVE);
        let u2 = self.uniform_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
