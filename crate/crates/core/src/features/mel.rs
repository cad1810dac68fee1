//! Log-Mel spectrogram: Hann-windowed STFT, triangular HTK-scale filterbank,
//! natural log with a fixed floor.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const N_FFT: usize = 1024;
pub const HOP: usize = 256;
pub const N_MELS: usize = 40;
pub const F_MIN: f64 = 0.0;
pub const F_MAX: f64 = 8000.0;
pub const LOG_FLOOR: f64 = 1e-6;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular Mel filterbank over the one-sided spectrum of a 1024-point FFT.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `[N_MELS x (N_FFT/2 + 1)]`, row-major.
    weights: Vec<f64>,
    /// Center frequency of each filter in Hz.
    centers: Vec<f64>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32) -> MelFilterbank {
        let n_bins = N_FFT / 2 + 1;
        let mel_lo = hz_to_mel(F_MIN);
        let mel_hi = hz_to_mel(F_MAX);
        // n_mels + 2 break points, uniformly spaced on the mel scale
        let points: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (N_MELS + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / N_FFT as f64;
        let mut weights = vec![0.0; N_MELS * n_bins];
        for m in 0..N_MELS {
            let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let rising = (f - lo) / (center - lo);
                let falling = (hi - f) / (hi - center);
                weights[m * n_bins + k] = rising.min(falling).max(0.0);
            }
        }
        MelFilterbank {
            weights,
            centers: points[1..=N_MELS].to_vec(),
            n_bins,
        }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Apply to one power spectrum.
    fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (m, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[m * self.n_bins..(m + 1) * self.n_bins];
            let mut acc = 0.0;
            for (w, p) in row.iter().zip(power) {
                acc += w * p;
            }
            *slot = acc;
        }
    }
}

/// Frame count of a non-centered STFT: `1 + floor((len - N_FFT)/HOP)`.
pub fn frame_count(samples: usize) -> Result<usize> {
    if samples < N_FFT {
        return Err(Error::data(format!(
            "log_mel needs at least {} samples, got {}",
            N_FFT, samples
        )));
    }
    Ok(1 + (samples - N_FFT) / HOP)
}

pub(crate) struct StftPlan {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl StftPlan {
    pub fn new() -> StftPlan {
        // periodic Hann
        let window: Vec<f64> = (0..N_FFT)
            .map(|j| 0.5 - 0.5 * (std::f64::consts::TAU * j as f64 / N_FFT as f64).cos())
            .collect();
        StftPlan {
            fft: FftPlanner::new().plan_fft_forward(N_FFT),
            window,
        }
    }
}

/// `[N_MELS x frames]` natural-log Mel spectrogram of 16 kHz mono samples.
/// Frames start at sample 0 (no center padding).
pub fn log_mel(samples: &[f32], bank: &MelFilterbank) -> Result<Tensor<f32>> {
    let frames = frame_count(samples.len())?;
    let plan = StftPlan::new();
    let mut buf = vec![Complex::new(0.0f64, 0.0f64); N_FFT];
    let mut scratch = vec![Complex::new(0.0f64, 0.0f64); plan.fft.get_inplace_scratch_len()];
    let mut power = vec![0.0f64; bank.n_bins()];
    let mut mel = vec![0.0f64; N_MELS];
    let mut out = Tensor::<f32>::zeros(&[N_MELS, frames]);

    for t in 0..frames {
        let start = t * HOP;
        for j in 0..N_FFT {
            buf[j] = Complex::new(samples[start + j] as f64 * plan.window[j], 0.0);
        }
        plan.fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, p) in power.iter_mut().enumerate() {
            *p = buf[k].norm_sqr();
        }
        bank.apply(&power, &mut mel);
        let od = out.data_mut();
        for (m, &e) in mel.iter().enumerate() {
            od[m * frames + t] = (e + LOG_FLOOR).ln() as f32;
        }
    }
    out.ensure_finite("log_mel")?;
    Ok(out)
}
