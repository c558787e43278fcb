//! Property tests for waveform augmentation.

use asrl_core::augment::{
    chunk_stream, insert_zero_padding, mix_at_snr, select_online_augment, ChunkSpec, Waveform,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn wave(samples: Vec<f32>) -> Waveform {
    Waveform { samples, rate: 16_000 }
}

fn nonsilent_samples(max_len: usize) -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-0.5..0.5f32, 1..=max_len)
        .prop_filter("needs signal energy", |s| s.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn mixing_preserves_length_and_bounds(
        speech in nonsilent_samples(400),
        noise in nonsilent_samples(100),
        snr_db in -5.0..30.0f64,
    ) {
        let out = mix_at_snr(&wave(speech.clone()), &wave(noise), snr_db).unwrap();
        prop_assert_eq!(out.wave.samples.len(), speech.len());
        prop_assert_eq!(out.wave.rate, 16_000);
        prop_assert!(out.noise_gain > 0.0);
        prop_assert!((0.0..=1.0).contains(&out.clip_fraction));
        for &s in &out.wave.samples {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn higher_snr_uses_smaller_noise_gain(
        speech in nonsilent_samples(300),
        noise in nonsilent_samples(80),
        snr_lo in -5.0..10.0f64,
        bump in 1.0..20.0f64,
    ) {
        let s = wave(speech);
        let n = wave(noise);
        let lo = mix_at_snr(&s, &n, snr_lo).unwrap();
        let hi = mix_at_snr(&s, &n, snr_lo + bump).unwrap();
        prop_assert!(hi.noise_gain < lo.noise_gain);
    }

    #[test]
    fn padding_is_lossless_on_speech(
        samples in nonsilent_samples(200),
        pads in prop::collection::vec((0.0..0.0125f64, 0.0..0.005f64), 0..4),
    ) {
        // positions in seconds within the waveform (200 samples = 12.5ms)
        let speech = wave(samples.clone());
        let Ok(padded) = insert_zero_padding(&speech, &pads) else {
            // duplicate resolved positions are a legitimate rejection
            return Ok(());
        };
        let total_pad: usize =
            pads.iter().map(|&(_, d)| (d * 16_000.0).round() as usize).sum();
        prop_assert_eq!(padded.wave.samples.len(), samples.len() + total_pad);

        // pad regions are exactly zero
        for pad in &padded.pads {
            for &s in &padded.wave.samples[pad.start..pad.start + pad.len] {
                prop_assert_eq!(s, 0.0);
            }
        }
        // mapped speech spans reproduce the original bit for bit and tile it
        let mut covered = 0usize;
        for span in &padded.speech_spans {
            prop_assert_eq!(
                &padded.wave.samples[span.out_start..span.out_start + span.len],
                &samples[span.orig_start..span.orig_start + span.len]
            );
            prop_assert_eq!(span.orig_start, covered);
            covered += span.len;
        }
        prop_assert_eq!(covered, samples.len());
    }

    #[test]
    fn chunking_partitions_exactly(
        samples in nonsilent_samples(4000),
        chunk_ms in 1..400u64,
    ) {
        let speech = wave(samples.clone());
        let chunks = chunk_stream(&speech, &ChunkSpec { chunk_ms }).unwrap();
        let chunk_len = (16_000 * chunk_ms as usize) / 1000;
        prop_assume!(chunk_len > 0);

        let mut rebuilt = Vec::new();
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(c.index, i);
            prop_assert_eq!(c.offset, rebuilt.len());
            prop_assert!(c.samples.len() <= chunk_len);
            if i + 1 < chunks.len() {
                prop_assert_eq!(c.samples.len(), chunk_len);
            }
            rebuilt.extend_from_slice(&c.samples);
        }
        prop_assert_eq!(rebuilt, samples);
    }

    #[test]
    fn selection_takes_exact_rounded_fraction(
        n in 0..200usize,
        fraction in 0.0..1.0f64,
        seed in 0..500u64,
    ) {
        let ids: Vec<String> = (0..n).map(|i| format!("utt-{i:03}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picked = select_online_augment(&ids, fraction, &mut rng).unwrap();
        prop_assert_eq!(picked.len(), (n as f64 * fraction).round() as usize);
        // unique, in corpus order, all from the corpus
        let mut last: Option<&String> = None;
        for id in &picked {
            prop_assert!(ids.contains(id));
            if let Some(prev) = last {
                prop_assert!(prev < id);
            }
            last = Some(id);
        }
    }
}
