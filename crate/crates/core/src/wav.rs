//! WAV file I/O for mono 16-bit PCM, the only format the pipeline handles.

use std::path::Path;

use thiserror::Error;

use crate::augment::Waveform;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("{path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("{path}: expected mono 16-bit PCM, got {channels} channel(s), {bits} bits, {format:?}")]
    UnsupportedFormat {
        path: String,
        channels: u16,
        bits: u16,
        format: hound::SampleFormat,
    },
}

fn codec_err(path: &Path, source: hound::Error) -> WavError {
    WavError::Codec { path: path.display().to_string(), source }
}

/// Reads a mono 16-bit PCM WAV into normalized f32 samples in [-1, 1).
pub fn read_wav(path: &Path) -> Result<Waveform, WavError> {
    let mut reader = hound::WavReader::open(path).map_err(|e| codec_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(WavError::UnsupportedFormat {
            path: path.display().to_string(),
            channels: spec.channels,
            bits: spec.bits_per_sample,
            format: spec.sample_format,
        });
    }
    let samples: Result<Vec<i16>, _> = reader.samples::<i16>().collect();
    let samples = samples.map_err(|e| codec_err(path, e))?;
    let scaled = samples.iter().map(|&s| f32::from(s) / 32768.0).collect();
    Ok(Waveform { samples: scaled, rate: spec.sample_rate })
}

/// Writes normalized f32 samples as mono 16-bit PCM, saturating out-of-range
/// values.
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<(), WavError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| codec_err(path, e))?;
    for &s in &wave.samples {
        let q = (s * 32768.0).clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(q).map_err(|e| codec_err(path, e))?;
    }
    writer.finalize().map_err(|e| codec_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_samples_to_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tone.wav");
        let samples: Vec<f32> =
            (0..160).map(|i| (i as f32 / 160.0 * std::f32::consts::TAU).sin() * 0.5).collect();
        let wave = Waveform { samples: samples.clone(), rate: 16_000 };
        write_wav(&path, &wave).unwrap();
        let back = read_wav(&path).unwrap();
        assert_eq!(back.rate, 16_000);
        assert_eq!(back.samples.len(), samples.len());
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() < 1.0 / 32768.0 + 1e-7);
        }
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut writer = hound::WavWriter::create(&path, spec).unwrap();
        for _ in 0..32 {
            writer.write_sample(0i16).unwrap();
            writer.write_sample(0i16).unwrap();
        }
        writer.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(WavError::UnsupportedFormat { channels: 2, .. })));
    }
}
