//! Raw audio to network input: length standardization, 40-bin log-Mel
//! spectrogram (64 ms window, 16 ms hop), deltas and delta-deltas stacked
//! into a `[3 x 40 x 512]` tensor.

pub mod delta;
pub mod mel;
pub mod wav;

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::tensor::Tensor;

pub use delta::deltas;
pub use mel::{log_mel, MelFilterbank, LOG_FLOOR, N_MELS};
pub use wav::{read_wav, write_wav_pcm16, SAMPLE_RATE};

/// Standardized clip length: 10 s at 16 kHz.
pub const TARGET_SAMPLES: usize = 160_000;
/// Frames kept after cropping the 622-frame spectrogram.
pub const N_FRAMES: usize = 512;
/// Frames of a full 10 s clip before the crop.
pub const FULL_FRAMES: usize = 622;
/// Delta regression window.
pub const DELTA_WINDOW: usize = 2;
/// Feature channels: log-Mel, delta, delta-delta.
pub const N_CHANNELS: usize = 3;

/// Mono 16 kHz audio in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub source_path: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32, source_path: String) -> Result<AudioClip> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::data(format!(
                "{source_path}: clips must be {SAMPLE_RATE} Hz after loading, got {sample_rate}"
            )));
        }
        Ok(AudioClip {
            samples,
            sample_rate,
            source_path,
        })
    }

    pub fn load(path: &Path) -> Result<AudioClip> {
        let (samples, sample_rate) = wav::read_wav(path)?;
        AudioClip::new(samples, sample_rate, path.display().to_string())
    }
}

/// The network input: `[3 x 40 x 512]`, channel 0 log-Mel, 1 delta,
/// 2 delta-delta. All values finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub data: Tensor<f32>,
}

impl FeatureTensor {
    pub fn new(data: Tensor<f32>) -> Result<FeatureTensor> {
        if data.shape() != [N_CHANNELS, N_MELS, N_FRAMES] {
            return Err(Error::shape(
                "feature_tensor",
                format!(
                    "expected [{N_CHANNELS} x {N_MELS} x {N_FRAMES}], got {:?}",
                    data.shape()
                ),
            ));
        }
        data.ensure_finite("feature_tensor")?;
        Ok(FeatureTensor { data })
    }
}

/// Which 512 of the 622 frames to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CropRule {
    /// Always the first 512 frames (train and eval).
    #[default]
    First,
    /// Uniform random offset; optional augmentation, off by default.
    Random,
}

/// Force a clip to exactly 10 s: shorter clips are tiled whole and truncated,
/// longer clips keep their first 10 s.
pub fn standardize_length(clip: &AudioClip) -> Result<AudioClip> {
    if clip.samples.is_empty() {
        return Err(Error::data(format!(
            "{}: empty clip cannot be standardized",
            clip.source_path
        )));
    }
    let mut samples = Vec::with_capacity(TARGET_SAMPLES);
    while samples.len() < TARGET_SAMPLES {
        let take = (TARGET_SAMPLES - samples.len()).min(clip.samples.len());
        samples.extend_from_slice(&clip.samples[..take]);
    }
    AudioClip::new(samples, clip.sample_rate, clip.source_path.clone())
}

/// Full pipeline: standardize, log-Mel, crop to 512 frames, stack
/// [log-Mel; delta; delta-delta]. No per-feature normalization.
pub fn assemble(clip: &AudioClip, bank: &MelFilterbank) -> Result<FeatureTensor> {
    assemble_with(clip, bank, CropRule::First, None)
}

pub fn assemble_with(
    clip: &AudioClip,
    bank: &MelFilterbank,
    crop: CropRule,
    rng: Option<&mut StreamRng>,
) -> Result<FeatureTensor> {
    let fixed = standardize_length(clip)?;
    let full = mel::log_mel(&fixed.samples, bank)?;
    let total = full.shape()[1];
    debug_assert_eq!(total, FULL_FRAMES);

    let offset = match crop {
        CropRule::First => 0,
        CropRule::Random => {
            let rng = rng.ok_or_else(|| {
                Error::config("random crop requires an RNG stream".to_string())
            })?;
            rng.index(total - N_FRAMES + 1)
        }
    };

    let mut cropped = Tensor::<f32>::zeros(&[N_MELS, N_FRAMES]);
    for m in 0..N_MELS {
        let src = &full.data()[m * total + offset..m * total + offset + N_FRAMES];
        cropped.data_mut()[m * N_FRAMES..(m + 1) * N_FRAMES].copy_from_slice(src);
    }

    let d1 = delta::deltas(&cropped, DELTA_WINDOW)?;
    let d2 = delta::deltas(&d1, DELTA_WINDOW)?;

    let mut stacked = Tensor::<f32>::zeros(&[N_CHANNELS, N_MELS, N_FRAMES]);
    let plane = N_MELS * N_FRAMES;
    stacked.data_mut()[..plane].copy_from_slice(cropped.data());
    stacked.data_mut()[plane..2 * plane].copy_from_slice(d1.data());
    stacked.data_mut()[2 * plane..].copy_from_slice(d2.data());
    FeatureTensor::new(stacked)
}
