//! RIFF/WAVE reading and writing.
//!
//! The reader accepts PCM16, PCM24 and float32 (plain or extensible),
//! averages channels down to mono, and resamples to 16 kHz with a
//! windowed-sinc kernel when the source rate differs.

use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

fn u16le(b: &[u8], at: usize) -> Result<u16> {
    let s = b
        .get(at..at + 2)
        .ok_or_else(|| Error::data("wav: truncated header".to_string()))?;
    Ok(u16::from_le_bytes([s[0], s[1]]))
}

fn u32le(b: &[u8], at: usize) -> Result<u32> {
    let s = b
        .get(at..at + 4)
        .ok_or_else(|| Error::data("wav: truncated header".to_string()))?;
    Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
}

struct Fmt {
    format: u16,
    channels: usize,
    sample_rate: u32,
    bits: u16,
}

/// Decode a WAV file to mono samples at 16 kHz in `[-1, 1]`.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::data(format!(
            "{} is not a RIFF/WAVE file",
            path.display()
        )));
    }

    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;
    let mut at = 12usize;
    while at + 8 <= bytes.len() {
        let id = &bytes[at..at + 4];
        let size = u32le(&bytes, at + 4)? as usize;
        let body_at = at + 8;
        if body_at + size > bytes.len() {
            return Err(Error::data(format!(
                "wav chunk {:?} overruns file ({} past end)",
                String::from_utf8_lossy(id),
                body_at + size - bytes.len()
            )));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::data("wav: fmt chunk too short".to_string()));
                }
                let mut format = u16le(&bytes, body_at)?;
                let channels = u16le(&bytes, body_at + 2)? as usize;
                let sample_rate = u32le(&bytes, body_at + 4)?;
                let bits = u16le(&bytes, body_at + 14)?;
                // WAVE_FORMAT_EXTENSIBLE carries the real code in the GUID.
                if format == 0xFFFE {
                    if size < 40 {
                        return Err(Error::data(
                            "wav: extensible fmt chunk too short".to_string(),
                        ));
                    }
                    format = u16le(&bytes, body_at + 24)?;
                }
                fmt = Some(Fmt {
                    format,
                    channels,
                    sample_rate,
                    bits,
                });
            }
            b"data" => data = Some(&bytes[body_at..body_at + size]),
            _ => {}
        }
        at = body_at + size + size % 2; // chunks are word-aligned
    }

    let fmt = fmt.ok_or_else(|| Error::data("wav: missing fmt chunk".to_string()))?;
    let data = data.ok_or_else(|| Error::data("wav: missing data chunk".to_string()))?;
    if fmt.channels == 0 {
        return Err(Error::data("wav: zero channels".to_string()));
    }

    let interleaved: Vec<f32> = match (fmt.format, fmt.bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
            .collect(),
        (1, 24) => data
            .chunks_exact(3)
            .map(|c| {
                let v = (c[0] as i32) | ((c[1] as i32) << 8) | ((c[2] as i8 as i32) << 16);
                v as f32 / 8_388_608.0
            })
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]).clamp(-1.0, 1.0))
            .collect(),
        (f, b) => {
            return Err(Error::data(format!(
                "wav: unsupported encoding (format {f}, {b}-bit); supported: PCM16, PCM24, float32"
            )))
        }
    };

    let frames = interleaved.len() / fmt.channels;
    let mono: Vec<f32> = if fmt.channels == 1 {
        interleaved
    } else {
        let inv = 1.0 / fmt.channels as f32;
        (0..frames)
            .map(|i| {
                interleaved[i * fmt.channels..(i + 1) * fmt.channels]
                    .iter()
                    .sum::<f32>()
                    * inv
            })
            .collect()
    };

    if fmt.sample_rate == SAMPLE_RATE {
        Ok((mono, SAMPLE_RATE))
    } else {
        Ok((resample(&mono, fmt.sample_rate, SAMPLE_RATE), SAMPLE_RATE))
    }
}

/// Write mono PCM16.
pub fn write_wav_pcm16(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Windowed-sinc resampler, 24 taps per side, Hann window, cutoff scaled
/// for downsampling.
fn resample(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    const TAPS: isize = 24;
    if input.is_empty() {
        return Vec::new();
    }
    let ratio = from as f64 / to as f64;
    let cutoff = (to as f64 / from as f64).min(1.0);
    let out_len = ((input.len() as f64) / ratio).round() as usize;
    let sinc = |x: f64| {
        if x.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
        }
    };
    (0..out_len)
        .map(|i| {
            let center = i as f64 * ratio;
            let j0 = center.floor() as isize;
            let mut acc = 0.0f64;
            for j in (j0 - TAPS + 1)..=(j0 + TAPS) {
                if j < 0 || j as usize >= input.len() {
                    continue;
                }
                let d = center - j as f64;
                let window = 0.5 * (1.0 + (std::f64::consts::PI * d / TAPS as f64).cos());
                acc += input[j as usize] as f64 * cutoff * sinc(cutoff * d) * window;
            }
            (acc as f32).clamp(-1.0, 1.0)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_roundtrip() {
        let dir = std::env::temp_dir().join("tornet_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.wav");
        let samples: Vec<f32> = (0..1000)
            .map(|i| (i as f32 * 0.01).sin() * 0.5)
            .collect();
        write_wav_pcm16(&path, &samples, 16000).unwrap();
        let (read, rate) = read_wav(&path).unwrap();
        assert_eq!(rate, 16000);
        assert_eq!(read.len(), samples.len());
        let max_err = read
            .iter()
            .zip(&samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err < 1.0 / 32000.0, "max quantization error {max_err}");
    }

    #[test]
    fn resample_preserves_tone_frequency() {
        // 440 Hz at 8 kHz upsampled to 16 kHz still crosses zero ~880 times/s
        let from = 8000u32;
        let tone: Vec<f32> = (0..8000)
            .map(|i| (std::f64::consts::TAU * 440.0 * i as f64 / from as f64).sin() as f32)
            .collect();
        let up = resample(&tone, from, 16000);
        assert!((up.len() as i64 - 16000).abs() <= 1);
        let crossings = up
            .windows(2)
            .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
            .count();
        assert!(
            (crossings as i64 - 880).abs() <= 6,
            "zero crossings {crossings}"
        );
    }

    #[test]
    fn rejects_non_wav_bytes() {
        let dir = std::env::temp_dir().join("tornet_wav_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("not_a_wav.wav");
        std::fs::write(&path, b"definitely not audio").unwrap();
        assert!(read_wav(&path).is_err());
    }
}
