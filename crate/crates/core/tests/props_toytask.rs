//! Property tests for the toy transcription task and linear policy.

use asrl_core::toytask::{
    content_tokens, synth_utterance, ChannelConfig, Language, ObsSequence, ToyPolicy, ToyVocab,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn channel_config() -> impl Strategy<Value = ChannelConfig> {
    (4..20u32, 0.0..0.9f64, 0.0..0.3f64, 0.0..0.3f64, 0.0..1.0f64, 0.0..1.0f64).prop_map(
        |(v_tok, sub, ins, del, noise, kw)| ChannelConfig {
            v_tok,
            sub_rate: sub,
            ins_rate: ins,
            del_rate: del,
            target_len_min: 2,
            target_len_max: 6,
            pure_noise_rate: noise,
            keyword_rate: kw,
        },
    )
}

proptest! {
    #[test]
    fn utterances_are_well_formed(cfg in channel_config(), seed in 0..5000u64) {
        let vocab = ToyVocab::bilingual(cfg.v_tok).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let utt = synth_utterance(&cfg, &vocab, &mut rng).unwrap();

        // observations stay in-alphabet and end with the end-of-input marker
        prop_assert!(!utt.obs_symbols.is_empty());
        prop_assert_eq!(*utt.obs_symbols.last().unwrap(), cfg.end_of_input());
        for &s in &utt.obs_symbols {
            prop_assert!(s < cfg.v_obs());
        }
        for &t in &utt.target_ids {
            prop_assert!(t < cfg.v_tok);
        }
        prop_assert_eq!(utt.duration_ms, 250 * utt.obs_symbols.len() as u64);

        match utt.language {
            None => prop_assert!(utt.target_ids.is_empty()),
            Some(Language::En) => {
                for &t in &utt.target_ids {
                    prop_assert!(vocab.latin_ids().contains(&t));
                }
            }
            Some(Language::Zh) => {
                for &t in &utt.target_ids {
                    prop_assert!(vocab.cjk_ids().contains(&t));
                }
            }
        }
        // keywords always point at tokens actually present in the target
        for &k in &utt.keyword_ids {
            prop_assert!(utt.target_ids.contains(&k));
        }
    }

    #[test]
    fn sampled_logprobs_match_recomputation(seed in 0..5000u64, v_tok in 3..10u32) {
        let mut policy = ToyPolicy::new(v_tok);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in policy.params_mut() {
            use rand::Rng;
            *w = rng.random_range(-1.0..1.0);
        }
        let obs = ObsSequence::new(vec![0, v_tok / 2, v_tok - 1], policy.v_obs()).unwrap();
        let sampled = policy.sample_response(&obs, &mut rng, 12);
        prop_assert_eq!(sampled.tokens.len(), sampled.logprobs.len());
        let recomputed = policy.token_logprobs(obs.symbols(), &sampled.tokens).unwrap();
        for (a, b) in sampled.logprobs.iter().zip(&recomputed) {
            prop_assert_eq!(a, b, "sampling-time logprob must be bit-identical");
        }
        // every emitted token is a valid id (possibly the stop token)
        let content = content_tokens(&sampled.tokens, policy.eos_id());
        for &t in content {
            prop_assert!(t < v_tok);
        }
        if sampled.tokens.len() < 12 {
            prop_assert_eq!(*sampled.tokens.last().unwrap(), policy.eos_id());
        }
    }

    #[test]
    fn greedy_is_idempotent(seed in 0..1000u64, v_tok in 3..10u32) {
        let mut policy = ToyPolicy::new(v_tok);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in policy.params_mut() {
            use rand::Rng;
            *w = rng.random_range(-1.0..1.0);
        }
        let obs = ObsSequence::new(vec![1, 2], policy.v_obs()).unwrap();
        let a = policy.greedy_decode(&obs, 10);
        let b = policy.greedy_decode(&obs, 10);
        prop_assert_eq!(a, b);
    }
}
