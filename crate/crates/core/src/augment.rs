//! Waveform augmentation: noise mixing at a target SNR, zero-padding
//! insertion, streaming chunk simulation, and online-augmentation selection.
//!
//! Sample convention: mono f32 in [-1, 1]. The noise gain for a target SNR
//! (in dB) is
//!
//! ```text
//! g = sqrt(P_speech / (P_noise * 10^(snr/10)))
//! ```
//!
//! with both powers measured over the speech's nonzero span, so silence
//! padding around an utterance does not dilute the estimate.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("sample rates differ: {a} vs {b}")]
    RateMismatch { a: u32, b: u32 },
    #[error("speech is silent (no nonzero samples); SNR is undefined")]
    SilentSpeech,
    #[error("noise is silent over the speech span; SNR is undefined")]
    SilentNoise,
    #[error("waveform invalid: {0}")]
    BadWaveform(String),
    #[error("invalid SNR spec: {0}")]
    BadSnr(String),
    #[error("invalid pad segment: {0}")]
    BadPad(String),
    #[error("invalid chunk spec: {0}")]
    BadChunk(String),
    #[error("selection fraction must be in [0, 1], got {0}")]
    BadFraction(f64),
}

/// Mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub rate: u32,
}

impl Waveform {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.rate == 0 {
            return Err(AugmentError::BadWaveform("sample rate is zero".into()));
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(AugmentError::BadWaveform("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }
}

/// Gaussian SNR draw parameters with a hard clamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SnrSpec {
    pub mean_db: f64,
    pub std_db: f64,
    pub clamp_min_db: f64,
    pub clamp_max_db: f64,
}

impl Default for SnrSpec {
    fn default() -> Self {
        SnrSpec { mean_db: 10.0, std_db: 5.0, clamp_min_db: -5.0, clamp_max_db: 30.0 }
    }
}

impl SnrSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if !self.mean_db.is_finite() || !self.std_db.is_finite() {
            return Err(AugmentError::BadSnr("mean/std must be finite".into()));
        }
        if self.std_db < 0.0 {
            return Err(AugmentError::BadSnr(format!("std must be >= 0, got {}", self.std_db)));
        }
        if self.clamp_min_db > self.clamp_max_db {
            return Err(AugmentError::BadSnr(format!(
                "clamp range [{}, {}] is inverted",
                self.clamp_min_db, self.clamp_max_db
            )));
        }
        Ok(())
    }
}

/// Draws one SNR value: Normal(mean, std) clamped into the configured range.
pub fn draw_snr<R: Rng + ?Sized>(spec: &SnrSpec, rng: &mut R) -> Result<f64, AugmentError> {
    spec.validate()?;
    let raw = if spec.std_db == 0.0 {
        spec.mean_db
    } else {
        let normal = Normal::new(spec.mean_db, spec.std_db)
            .map_err(|e| AugmentError::BadSnr(e.to_string()))?;
        normal.sample(rng)
    };
    Ok(raw.clamp(spec.clamp_min_db, spec.clamp_max_db))
}

/// Result of mixing noise into speech.
#[derive(Debug, Clone)]
pub struct MixOutcome {
    pub wave: Waveform,
    /// Linear gain applied to the noise.
    pub noise_gain: f64,
    /// Fraction of output samples that hit the [-1, 1] clip.
    pub clip_fraction: f64,
}

fn nonzero_span(samples: &[f32]) -> Option<(usize, usize)> {
    let first = samples.iter().position(|&s| s != 0.0)?;
    let last = samples.iter().rposition(|&s| s != 0.0).expect("nonzero sample exists");
    Some((first, last + 1))
}

fn mean_square(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum::<f64>() / samples.len() as f64
}

/// Mixes `noise` into `speech` at the requested SNR. Noise is tiled or
/// truncated to the speech length; powers are measured over the speech's
/// nonzero span. The output is hard-clipped to [-1, 1].
pub fn mix_at_snr(
    speech: &Waveform,
    noise: &Waveform,
    snr_db: f64,
) -> Result<MixOutcome, AugmentError> {
    speech.validate()?;
    noise.validate()?;
    if speech.rate != noise.rate {
        return Err(AugmentError::RateMismatch { a: speech.rate, b: noise.rate });
    }
    if !snr_db.is_finite() {
        return Err(AugmentError::BadSnr(format!("snr must be finite, got {snr_db}")));
    }
    if noise.samples.is_empty() {
        return Err(AugmentError::SilentNoise);
    }
    let (lo, hi) = nonzero_span(&speech.samples).ok_or(AugmentError::SilentSpeech)?;

    let tiled: Vec<f32> =
        (0..speech.samples.len()).map(|i| noise.samples[i % noise.samples.len()]).collect();
    let p_speech = mean_square(&speech.samples[lo..hi]);
    let p_noise = mean_square(&tiled[lo..hi]);
    if p_noise == 0.0 {
        return Err(AugmentError::SilentNoise);
    }

    let gain = (p_speech / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let mut clipped = 0usize;
    let samples: Vec<f32> = speech
        .samples
        .iter()
        .zip(&tiled)
        .map(|(&s, &n)| {
            let v = f64::from(s) + gain * f64::from(n);
            if !(-1.0..=1.0).contains(&v) {
                clipped += 1;
            }
            v.clamp(-1.0, 1.0) as f32
        })
        .collect();

    Ok(MixOutcome {
        clip_fraction: clipped as f64 / samples.len().max(1) as f64,
        wave: Waveform { samples, rate: speech.rate },
        noise_gain: gain,
    })
}

/// A zero span inserted into the output, in output sample coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpan {
    pub start: usize,
    pub len: usize,
}

/// Mapping from a contiguous run of original samples to its new offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanMap {
    pub orig_start: usize,
    pub out_start: usize,
    pub len: usize,
}

/// Padded waveform plus bookkeeping for keeping transcripts aligned.
#[derive(Debug, Clone)]
pub struct PaddedWaveform {
    pub wave: Waveform,
    pub pads: Vec<PadSpan>,
    pub speech_spans: Vec<SpanMap>,
}

/// Inserts exact-zero spans into `speech`. Each segment is
/// (position_s, duration_s) with the position on the original timeline;
/// positions must be unique and within [0, duration]. Total output length is
/// the original length plus the sum of pad lengths.
pub fn insert_zero_padding(
    speech: &Waveform,
    segments: &[(f64, f64)],
) -> Result<PaddedWaveform, AugmentError> {
    speech.validate()?;
    let rate = f64::from(speech.rate);
    let n = speech.samples.len();
    let mut resolved: Vec<(usize, usize)> = Vec::with_capacity(segments.len());
    for &(pos_s, dur_s) in segments {
        if !pos_s.is_finite() || !dur_s.is_finite() || pos_s < 0.0 || dur_s < 0.0 {
            return Err(AugmentError::BadPad(format!(
                "segment ({pos_s}, {dur_s}) must have finite non-negative position and duration"
            )));
        }
        let pos = (pos_s * rate).round() as usize;
        if pos > n {
            return Err(AugmentError::BadPad(format!(
                "position {pos_s}s is past the end of a {:.3}s waveform",
                speech.duration_s()
            )));
        }
        let len = (dur_s * rate).round() as usize;
        if len == 0 {
            continue;
        }
        resolved.push((pos, len));
    }
    resolved.sort_unstable();
    if resolved.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(AugmentError::BadPad("two segments share one insertion position".into()));
    }

    let total: usize = resolved.iter().map(|&(_, len)| len).sum();
    let mut samples = Vec::with_capacity(n + total);
    let mut pads = Vec::with_capacity(resolved.len());
    let mut speech_spans = Vec::new();
    let mut cursor = 0usize;
    for &(pos, len) in &resolved {
        if pos > cursor {
            speech_spans.push(SpanMap {
                orig_start: cursor,
                out_start: samples.len(),
                len: pos - cursor,
            });
            samples.extend_from_slice(&speech.samples[cursor..pos]);
            cursor = pos;
        }
        pads.push(PadSpan { start: samples.len(), len });
        samples.resize(samples.len() + len, 0.0);
    }
    if cursor < n {
        speech_spans.push(SpanMap { orig_start: cursor, out_start: samples.len(), len: n - cursor });
        samples.extend_from_slice(&speech.samples[cursor..]);
    }

    Ok(PaddedWaveform { wave: Waveform { samples, rate: speech.rate }, pads, speech_spans })
}

/// Streaming chunk size.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkSpec {
    pub chunk_ms: u64,
}

impl Default for ChunkSpec {
    fn default() -> Self {
        ChunkSpec { chunk_ms: 600 }
    }
}

/// One streaming chunk; `offset` is in samples from the start.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub index: usize,
    pub offset: usize,
    pub samples: Vec<f32>,
}

/// Splits a waveform into fixed-size chunks; the final chunk keeps the
/// remainder. Chunks concatenate back to the input bit for bit.
pub fn chunk_stream(wave: &Waveform, spec: &ChunkSpec) -> Result<Vec<Chunk>, AugmentError> {
    wave.validate()?;
    let chunk_len = (u64::from(wave.rate) * spec.chunk_ms / 1000) as usize;
    if chunk_len == 0 {
        return Err(AugmentError::BadChunk(format!(
            "{}ms at {}Hz is shorter than one sample",
            spec.chunk_ms, wave.rate
        )));
    }
    Ok(wave
        .samples
        .chunks(chunk_len)
        .enumerate()
        .map(|(index, chunk)| Chunk { index, offset: index * chunk_len, samples: chunk.to_vec() })
        .collect())
}

/// Picks round(fraction * n) ids for online augmentation, without
/// replacement, returned in corpus order. Deterministic per RNG state.
pub fn select_online_augment<R: Rng + ?Sized>(
    ids: &[String],
    fraction: f64,
    rng: &mut R,
) -> Result<Vec<String>, AugmentError> {
    if !(0.0..=1.0).contains(&fraction) || !fraction.is_finite() {
        return Err(AugmentError::BadFraction(fraction));
    }
    let k = (ids.len() as f64 * fraction).round() as usize;
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    // partial Fisher-Yates: the first k slots end up a uniform sample
    for i in 0..k {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut chosen: Vec<usize> = idx[..k].to_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| ids[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant(value: f32, n: usize) -> Waveform {
        Waveform { samples: vec![value; n], rate: 16_000 }
    }

    fn alternating(value: f32, n: usize) -> Waveform {
        Waveform {
            samples: (0..n).map(|i| if i % 2 == 0 { value } else { -value }).collect(),
            rate: 16_000,
        }
    }

    #[test]
    fn equal_power_at_10db_gives_known_gain() {
        // P_s = P_n  =>  g = 10^(-1/2)
        let speech = constant(0.5, 1600);
        let noise = alternating(0.5, 1600);
        let out = mix_at_snr(&speech, &noise, 10.0).unwrap();
        assert!((out.noise_gain - 0.31622776601683794).abs() < 1e-12);
    }

    #[test]
    fn zero_db_with_equal_power_is_unit_gain() {
        let speech = constant(0.25, 800);
        let noise = alternating(0.25, 800);
        let out = mix_at_snr(&speech, &noise, 0.0).unwrap();
        assert!((out.noise_gain - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measured_snr_matches_request() {
        let speech = alternating(0.4, 4000);
        let noise = Waveform {
            samples: (0..4000).map(|i| ((i * 37 % 101) as f32 / 101.0 - 0.5) * 0.6).collect(),
            rate: 16_000,
        };
        for snr in [-5.0, 0.0, 10.0, 30.0] {
            let out = mix_at_snr(&speech, &noise, snr).unwrap();
            let p_s = mean_square(&speech.samples);
            let scaled: Vec<f32> =
                (0..4000).map(|i| (out.noise_gain * f64::from(noise.samples[i % 4000])) as f32).collect();
            let measured = 10.0 * (p_s / mean_square(&scaled)).log10();
            assert!((measured - snr).abs() < 1e-5, "snr {snr}: measured {measured}");
        }
    }

    #[test]
    fn power_ignores_leading_and_trailing_silence() {
        // identical speech content, one version wrapped in silence: the gain
        // must not change
        let core_samples: Vec<f32> = (0..800).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        let bare = Waveform { samples: core_samples.clone(), rate: 16_000 };
        let mut padded_samples = vec![0.0; 400];
        padded_samples.extend_from_slice(&core_samples);
        padded_samples.extend(vec![0.0; 400]);
        let padded = Waveform { samples: padded_samples, rate: 16_000 };
        let noise = constant(0.3, 100);
        let g1 = mix_at_snr(&bare, &noise, 10.0).unwrap().noise_gain;
        let g2 = mix_at_snr(&padded, &noise, 10.0).unwrap().noise_gain;
        assert!((g1 - g2).abs() < 1e-9);
    }

    #[test]
    fn short_noise_is_tiled() {
        let speech = constant(0.5, 1000);
        let noise = alternating(0.5, 7);
        let out = mix_at_snr(&speech, &noise, 0.0).unwrap();
        assert_eq!(out.wave.samples.len(), 1000);
        // tiling means sample i depends on noise[i % 7]
        for i in 0..1000 {
            let expected =
                (0.5f64 + out.noise_gain * f64::from(noise.samples[i % 7])).clamp(-1.0, 1.0);
            assert!((f64::from(out.wave.samples[i]) - expected).abs() < 1e-7);
        }
    }

    #[test]
    fn clipping_is_counted() {
        let speech = constant(0.9, 100);
        let noise = constant(0.9, 100);
        let out = mix_at_snr(&speech, &noise, 0.0).unwrap();
        // 0.9 + g*0.9 > 1 for every sample
        assert_eq!(out.clip_fraction, 1.0);
        assert!(out.wave.samples.iter().all(|&s| s <= 1.0));
    }

    #[test]
    fn silence_errors() {
        let silent = constant(0.0, 100);
        let speech = constant(0.5, 100);
        assert_eq!(mix_at_snr(&silent, &speech, 10.0).unwrap_err(), AugmentError::SilentSpeech);
        assert_eq!(mix_at_snr(&speech, &silent, 10.0).unwrap_err(), AugmentError::SilentNoise);
    }

    #[test]
    fn rate_mismatch_rejected() {
        let a = constant(0.5, 100);
        let mut b = constant(0.5, 100);
        b.rate = 8_000;
        assert_eq!(
            mix_at_snr(&a, &b, 10.0).unwrap_err(),
            AugmentError::RateMismatch { a: 16_000, b: 8_000 }
        );
    }

    #[test]
    fn snr_draw_respects_clamp() {
        let spec = SnrSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..2000 {
            let snr = draw_snr(&spec, &mut rng).unwrap();
            assert!((-5.0..=30.0).contains(&snr));
        }
        // degenerate std: always the mean
        let spec = SnrSpec { std_db: 0.0, ..SnrSpec::default() };
        assert_eq!(draw_snr(&spec, &mut rng).unwrap(), 10.0);
    }

    #[test]
    fn padding_inserts_exact_zeros_and_preserves_speech() {
        let speech = Waveform {
            samples: (0..1600).map(|i| (i as f32 / 100.0).sin() * 0.5).collect(),
            rate: 16_000,
        };
        // 0.05s at the start boundary of sample 800, 0.1s at the very end
        let padded = insert_zero_padding(&speech, &[(0.05, 0.05), (0.1, 0.1)]).unwrap();
        let added = 800 + 1600;
        assert_eq!(padded.wave.samples.len(), 1600 + added);
        assert_eq!(padded.pads.len(), 2);
        for pad in &padded.pads {
            assert!(padded.wave.samples[pad.start..pad.start + pad.len].iter().all(|&s| s == 0.0));
        }
        for span in &padded.speech_spans {
            for k in 0..span.len {
                assert_eq!(
                    padded.wave.samples[span.out_start + k],
                    speech.samples[span.orig_start + k]
                );
            }
        }
        let mapped: usize = padded.speech_spans.iter().map(|s| s.len).sum();
        assert_eq!(mapped, 1600);
    }

    #[test]
    fn padding_rejects_bad_segments() {
        let speech = constant(0.5, 1600);
        assert!(matches!(
            insert_zero_padding(&speech, &[(-0.1, 0.1)]).unwrap_err(),
            AugmentError::BadPad(_)
        ));
        assert!(matches!(
            insert_zero_padding(&speech, &[(99.0, 0.1)]).unwrap_err(),
            AugmentError::BadPad(_)
        ));
        assert!(matches!(
            insert_zero_padding(&speech, &[(0.05, 0.1), (0.05, 0.2)]).unwrap_err(),
            AugmentError::BadPad(_)
        ));
    }

    #[test]
    fn zero_duration_segments_are_noops() {
        let speech = constant(0.5, 1600);
        let padded = insert_zero_padding(&speech, &[(0.05, 0.0)]).unwrap();
        assert_eq!(padded.wave.samples, speech.samples);
        assert!(padded.pads.is_empty());
    }

    #[test]
    fn chunking_partitions_exactly() {
        // 2.0s at 16kHz with 600ms chunks: 600/600/600/200
        let wave = Waveform { samples: (0..32_000).map(|i| i as f32).collect(), rate: 16_000 };
        let chunks = chunk_stream(&wave, &ChunkSpec { chunk_ms: 600 }).unwrap();
        let lens: Vec<usize> = chunks.iter().map(|c| c.samples.len()).collect();
        assert_eq!(lens, vec![9600, 9600, 9600, 3200]);
        let rebuilt: Vec<f32> = chunks.iter().flat_map(|c| c.samples.iter().copied()).collect();
        assert_eq!(rebuilt, wave.samples);
        for (i, c) in chunks.iter().enumerate() {
            assert_eq!(c.index, i);
            assert_eq!(c.offset, i * 9600);
        }
    }

    #[test]
    fn chunking_empty_wave_is_empty() {
        let wave = Waveform { samples: vec![], rate: 16_000 };
        assert!(chunk_stream(&wave, &ChunkSpec::default()).unwrap().is_empty());
    }

    #[test]
    fn online_selection_takes_rounded_fraction() {
        let ids: Vec<String> = (0..10).map(|i| format!("utt-{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let picked = select_online_augment(&ids, 0.3, &mut rng).unwrap();
        assert_eq!(picked.len(), 3);
        for p in &picked {
            assert!(ids.contains(p));
        }
        let mut sorted = picked.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), 3, "no duplicates");
        // deterministic per seed
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_online_augment(&ids, 0.3, &mut rng).unwrap(), picked);
    }

    #[test]
    fn selection_fraction_validated() {
        let ids = vec!["a".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(select_online_augment(&ids, 1.5, &mut rng).is_err());
        assert!(select_online_augment(&ids, -0.1, &mut rng).is_err());
    }
}
