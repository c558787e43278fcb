//! A toy transcription task small enough to train on one CPU core.
//!
//! Utterances are token-id sequences over a bilingual vocabulary (Latin
//! syllables and CJK characters). The "audio" is a symbol sequence obtained
//! by passing the target through a noisy channel (substitutions,
//! insertions, deletions) and appending an end-of-input marker. The policy
//! is a linear-softmax autoregressive model: at step `t` the logits are a
//! linear function of one-hot(current observation symbol) and one-hot
//! (previous output token, or a begin marker), so exact logprobs and
//! gradients are cheap and the whole GRPO loop can be checked numerically.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grpo::{GrpoError, Policy, SampledResponse};
use crate::textmetrics::{TokenMode, TokenSeq};

#[derive(Debug, Error, PartialEq)]
pub enum ToyTaskError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("vocabulary of {requested} tokens exceeds capacity {capacity}")]
    VocabTooLarge { requested: u32, capacity: u32 },
    #[error("observation symbol {sym} out of range (v_obs = {v_obs})")]
    ObsSymbolOutOfRange { sym: u32, v_obs: u32 },
    #[error("token {tok} out of range (eos id = {eos})")]
    TokenOutOfRange { tok: u32, eos: u32 },
    #[error("observation sequence is empty")]
    EmptyObs,
}

const LATIN_CONSONANTS: &[char] =
    &['b', 'd', 'f', 'g', 'h', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'w', 'z'];
const LATIN_VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const CJK_POOL: &str = "天地人山水火木金土日月星云风雨雪电车门马牛羊鱼鸟虫花草树林房屋街道城市国家学校老师朋友时间空声音语言文字数颜色红蓝绿黄黑白大小多少上下左右前后东西南北中外开关来去吃喝看听说读写走跑飞游睡醒想知";

/// Token id space: content ids are split into a Latin half (two-letter
/// syllables) and a CJK half (single characters), so language identity is a
/// property of the id.
#[derive(Debug, Clone)]
pub struct ToyVocab {
    surfaces: Vec<String>,
    n_latin: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    En,
    Zh,
}

impl ToyVocab {
    /// Builds a vocabulary of `v_tok` content tokens, half Latin syllables
    /// and half CJK characters (Latin gets the extra one when odd).
    pub fn bilingual(v_tok: u32) -> Result<Self, ToyTaskError> {
        if v_tok < 2 {
            return Err(ToyTaskError::InvalidConfig(format!(
                "bilingual vocabulary needs v_tok >= 2, got {v_tok}"
            )));
        }
        let latin_cap = (LATIN_CONSONANTS.len() * LATIN_VOWELS.len()) as u32;
        let cjk: Vec<char> = CJK_POOL.chars().collect();
        let n_latin = v_tok - v_tok / 2;
        let n_cjk = v_tok / 2;
        if n_latin > latin_cap || n_cjk > cjk.len() as u32 {
            return Err(ToyTaskError::VocabTooLarge {
                requested: v_tok,
                capacity: latin_cap + cjk.len() as u32,
            });
        }
        let mut surfaces = Vec::with_capacity(v_tok as usize);
        for i in 0..n_latin as usize {
            let c = LATIN_CONSONANTS[i / LATIN_VOWELS.len()];
            let v = LATIN_VOWELS[i % LATIN_VOWELS.len()];
            surfaces.push(format!("{c}{v}"));
        }
        for ch in cjk.iter().take(n_cjk as usize) {
            surfaces.push(ch.to_string());
        }
        Ok(ToyVocab { surfaces, n_latin })
    }

    pub fn v_tok(&self) -> u32 {
        self.surfaces.len() as u32
    }

    pub fn surface(&self, id: u32) -> &str {
        &self.surfaces[id as usize]
    }

    pub fn language_of(&self, id: u32) -> Language {
        if id < self.n_latin {
            Language::En
        } else {
            Language::Zh
        }
    }

    pub fn latin_ids(&self) -> std::ops::Range<u32> {
        0..self.n_latin
    }

    pub fn cjk_ids(&self) -> std::ops::Range<u32> {
        self.n_latin..self.v_tok()
    }

    /// Surface forms of `ids` as a mixed-mode token sequence.
    pub fn token_seq(&self, ids: &[u32]) -> TokenSeq {
        let tokens = ids.iter().map(|&i| self.surface(i).to_string()).collect();
        TokenSeq::new(tokens, TokenMode::Mixed).expect("vocabulary surfaces are non-empty")
    }
}

/// Validated observation sequence: non-empty, all symbols below the
/// observation vocabulary size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsSequence(Vec<u32>);

impl ObsSequence {
    pub fn new(symbols: Vec<u32>, v_obs: u32) -> Result<Self, ToyTaskError> {
        if symbols.is_empty() {
            return Err(ToyTaskError::EmptyObs);
        }
        if let Some(&sym) = symbols.iter().find(|&&s| s >= v_obs) {
            return Err(ToyTaskError::ObsSymbolOutOfRange { sym, v_obs });
        }
        Ok(ObsSequence(symbols))
    }

    pub fn symbols(&self) -> &[u32] {
        &self.0
    }
}

/// Synthetic channel parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    /// Content vocabulary size; the observation alphabet adds one
    /// end-of-input marker on top.
    pub v_tok: u32,
    /// Per-position probability of corrupting a symbol into another.
    pub sub_rate: f64,
    /// Per-position probability of inserting a random symbol after it.
    pub ins_rate: f64,
    /// Per-position probability of dropping a symbol.
    pub del_rate: f64,
    pub target_len_min: usize,
    pub target_len_max: usize,
    /// Fraction of utterances that are pure non-speech: empty target, a
    /// repeated junk symbol as observation.
    pub pure_noise_rate: f64,
    /// Fraction of speech utterances that carry one keyword drawn from
    /// their own target.
    pub keyword_rate: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            v_tok: 12,
            sub_rate: 0.1,
            ins_rate: 0.0,
            del_rate: 0.0,
            target_len_min: 4,
            target_len_max: 10,
            pure_noise_rate: 0.0,
            keyword_rate: 0.3,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ToyTaskError> {
        let bad = |m: String| Err(ToyTaskError::InvalidConfig(m));
        if self.v_tok < 2 {
            return bad(format!("v_tok must be >= 2, got {}", self.v_tok));
        }
        for (name, rate) in [
            ("sub_rate", self.sub_rate),
            ("ins_rate", self.ins_rate),
            ("del_rate", self.del_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} must be in [0, 1), got {rate}"));
            }
        }
        for (name, rate) in [
            ("pure_noise_rate", self.pure_noise_rate),
            ("keyword_rate", self.keyword_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} must be in [0, 1], got {rate}"));
            }
        }
        if self.target_len_min < 1 || self.target_len_min > self.target_len_max {
            return bad(format!(
                "target length range [{}, {}] is invalid",
                self.target_len_min, self.target_len_max
            ));
        }
        Ok(())
    }

    /// Observation alphabet size: content symbols plus the end marker.
    pub fn v_obs(&self) -> u32 {
        self.v_tok + 1
    }

    /// The end-of-input observation symbol.
    pub fn end_of_input(&self) -> u32 {
        self.v_tok
    }
}

/// One synthesized utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyUtterance {
    pub target_ids: Vec<u32>,
    /// Channel output, end-of-input marker included.
    pub obs_symbols: Vec<u32>,
    /// None for pure-noise utterances.
    pub language: Option<Language>,
    pub duration_ms: u64,
    /// Token ids designated as keywords (each one a single vocabulary word).
    pub keyword_ids: Vec<u32>,
}

const MS_PER_SYMBOL: u64 = 250;

/// Draws one utterance from the channel. Deterministic given the RNG state.
pub fn synth_utterance<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    vocab: &ToyVocab,
    rng: &mut R,
) -> Result<ToyUtterance, ToyTaskError> {
    cfg.validate()?;
    if vocab.v_tok() != cfg.v_tok {
        return Err(ToyTaskError::InvalidConfig(format!(
            "vocab has {} tokens but channel expects {}",
            vocab.v_tok(),
            cfg.v_tok
        )));
    }
    let len = rng.random_range(cfg.target_len_min..=cfg.target_len_max);

    if rng.random::<f64>() < cfg.pure_noise_rate {
        let junk = rng.random_range(0..cfg.v_tok);
        let mut obs = vec![junk; len];
        obs.push(cfg.end_of_input());
        return Ok(ToyUtterance {
            target_ids: Vec::new(),
            obs_symbols: obs,
            language: None,
            duration_ms: obs_duration(len + 1),
            keyword_ids: Vec::new(),
        });
    }

    let language = if rng.random::<f64>() < 0.5 { Language::En } else { Language::Zh };
    let id_range = match language {
        Language::En => vocab.latin_ids(),
        Language::Zh => vocab.cjk_ids(),
    };
    let target: Vec<u32> = (0..len).map(|_| rng.random_range(id_range.clone())).collect();

    let mut obs = Vec::with_capacity(len + 1);
    for &tok in &target {
        if rng.random::<f64>() < cfg.del_rate {
            continue;
        }
        let sym = if rng.random::<f64>() < cfg.sub_rate {
            // substitute with a different content symbol
            (tok + 1 + rng.random_range(0..cfg.v_tok - 1)) % cfg.v_tok
        } else {
            tok
        };
        obs.push(sym);
        if rng.random::<f64>() < cfg.ins_rate {
            obs.push(rng.random_range(0..cfg.v_tok));
        }
    }
    obs.push(cfg.end_of_input());

    let keyword_ids = if rng.random::<f64>() < cfg.keyword_rate {
        vec![target[rng.random_range(0..target.len())]]
    } else {
        Vec::new()
    };

    Ok(ToyUtterance {
        target_ids: target,
        duration_ms: obs_duration(obs.len()),
        obs_symbols: obs,
        language: Some(language),
        keyword_ids,
    })
}

fn obs_duration(n_symbols: usize) -> u64 {
    n_symbols as u64 * MS_PER_SYMBOL
}

/// Draws `n` utterances.
pub fn synth_dataset<R: Rng + ?Sized>(
    cfg: &ChannelConfig,
    vocab: &ToyVocab,
    n: usize,
    rng: &mut R,
) -> Result<Vec<ToyUtterance>, ToyTaskError> {
    (0..n).map(|_| synth_utterance(cfg, vocab, rng)).collect()
}

/// Linear-softmax autoregressive policy.
///
/// Logits over `v_tok + 1` outputs (content tokens plus the end token) are
/// `W phi(t)` where `phi(t)` one-hot-encodes the observation symbol at
/// position `min(t, |obs| - 1)` and the previous output token (a begin
/// marker at `t = 0`). `W` is stored row-major, one row per output token.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    v_tok: u32,
    w: Vec<f64>,
}

impl ToyPolicy {
    /// Zero-initialized policy: the uniform distribution at every step.
    pub fn new(v_tok: u32) -> Self {
        let rows = v_tok as usize + 1;
        let cols = Self::cols_for(v_tok);
        ToyPolicy { v_tok, w: vec![0.0; rows * cols] }
    }

    fn cols_for(v_tok: u32) -> usize {
        // obs one-hot (v_tok + 1), prev-token one-hot (v_tok + 1), begin marker
        2 * v_tok as usize + 3
    }

    pub fn v_tok(&self) -> u32 {
        self.v_tok
    }

    pub fn v_obs(&self) -> u32 {
        self.v_tok + 1
    }

    /// Id of the end-of-response token (one past the content ids).
    pub fn eos_id(&self) -> u32 {
        self.v_tok
    }

    fn rows(&self) -> usize {
        self.v_tok as usize + 1
    }

    fn cols(&self) -> usize {
        Self::cols_for(self.v_tok)
    }

    fn obs_col(&self, sym: u32) -> usize {
        sym as usize
    }

    fn prev_col(&self, prev: Option<u32>) -> usize {
        match prev {
            Some(tok) => self.v_obs() as usize + tok as usize,
            None => self.cols() - 1,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.w
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    fn check_obs(&self, obs: &[u32]) -> Result<(), ToyTaskError> {
        if obs.is_empty() {
            return Err(ToyTaskError::EmptyObs);
        }
        if let Some(&sym) = obs.iter().find(|&&s| s >= self.v_obs()) {
            return Err(ToyTaskError::ObsSymbolOutOfRange { sym, v_obs: self.v_obs() });
        }
        Ok(())
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), ToyTaskError> {
        if let Some(&tok) = tokens.iter().find(|&&t| t > self.eos_id()) {
            return Err(ToyTaskError::TokenOutOfRange { tok, eos: self.eos_id() });
        }
        Ok(())
    }

    /// Log-softmax over output tokens for one step.
    fn step_logprobs(&self, obs_sym: u32, prev: Option<u32>) -> Vec<f64> {
        let oc = self.obs_col(obs_sym);
        let pc = self.prev_col(prev);
        let cols = self.cols();
        let mut logits: Vec<f64> =
            (0..self.rows()).map(|r| self.w[r * cols + oc] + self.w[r * cols + pc]).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        for l in &mut logits {
            *l -= lse;
        }
        logits
    }

    fn obs_sym_at(&self, obs: &[u32], t: usize) -> u32 {
        obs[t.min(obs.len() - 1)]
    }

    /// Per-token logprobs of a fixed token sequence.
    pub fn token_logprobs(&self, obs: &[u32], tokens: &[u32]) -> Result<Vec<f64>, ToyTaskError> {
        self.check_obs(obs)?;
        self.check_tokens(tokens)?;
        let mut out = Vec::with_capacity(tokens.len());
        let mut prev = None;
        for (t, &tok) in tokens.iter().enumerate() {
            let lp = self.step_logprobs(self.obs_sym_at(obs, t), prev);
            out.push(lp[tok as usize]);
            prev = Some(tok);
        }
        Ok(out)
    }

    /// Per-token logprobs plus the gradient of their sum with respect to the
    /// flattened parameters.
    pub fn logprob_with_grad(
        &self,
        obs: &[u32],
        tokens: &[u32],
    ) -> Result<(Vec<f64>, Vec<f64>), ToyTaskError> {
        let mut grad = vec![0.0; self.w.len()];
        let weights = vec![1.0; tokens.len()];
        let lps = self.weighted_grad(obs, tokens, &weights, &mut grad)?;
        Ok((lps, grad))
    }

    /// Accumulates `sum_t weights[t] * d logp(tokens[t]) / dW` into `grad`
    /// and returns the per-token logprobs.
    fn weighted_grad(
        &self,
        obs: &[u32],
        tokens: &[u32],
        weights: &[f64],
        grad: &mut [f64],
    ) -> Result<Vec<f64>, ToyTaskError> {
        self.check_obs(obs)?;
        self.check_tokens(tokens)?;
        assert_eq!(weights.len(), tokens.len(), "one weight per token");
        assert_eq!(grad.len(), self.w.len(), "gradient buffer sized to parameters");
        let cols = self.cols();
        let mut out = Vec::with_capacity(tokens.len());
        let mut prev = None;
        for (t, &tok) in tokens.iter().enumerate() {
            let oc = self.obs_col(self.obs_sym_at(obs, t));
            let pc = self.prev_col(prev);
            let lp = self.step_logprobs(self.obs_sym_at(obs, t), prev);
            out.push(lp[tok as usize]);
            // d logp(y) / d logit_r = 1[r == y] - p_r; the feature is one-hot
            // on the obs and prev columns.
            for r in 0..self.rows() {
                let coeff = (f64::from(r == tok as usize) - lp[r].exp()) * weights[t];
                grad[r * cols + oc] += coeff;
                grad[r * cols + pc] += coeff;
            }
            prev = Some(tok);
        }
        Ok(out)
    }

    fn step_pick<R: RngCore + ?Sized>(
        &self,
        lp: &[f64],
        temperature: f64,
        rng: Option<&mut R>,
    ) -> u32 {
        if temperature == 0.0 || rng.is_none() {
            // argmax, lowest id on ties
            let mut best = 0usize;
            for (i, l) in lp.iter().enumerate() {
                if *l > lp[best] {
                    best = i;
                }
            }
            return best as u32;
        }
        let rng = rng.unwrap();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let inv_t = 1.0 / temperature;
        // re-normalize under the temperature
        let scaled: Vec<f64> = lp.iter().map(|l| l * inv_t).collect();
        let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = scaled.iter().map(|l| (l - max).exp()).sum();
        for (i, l) in scaled.iter().enumerate() {
            acc += (l - max).exp() / z;
            if u < acc {
                return i as u32;
            }
        }
        (lp.len() - 1) as u32
    }

    fn rollout<R: RngCore + ?Sized>(
        &self,
        obs: &[u32],
        max_len: usize,
        temperature: f64,
        mut rng: Option<&mut R>,
    ) -> SampledResponse {
        let mut tokens = Vec::new();
        let mut logprobs = Vec::new();
        let mut prev = None;
        for t in 0..max_len {
            let lp = self.step_logprobs(self.obs_sym_at(obs, t), prev);
            let tok = self.step_pick(&lp, temperature, rng.as_deref_mut());
            tokens.push(tok);
            logprobs.push(lp[tok as usize]);
            if tok == self.eos_id() {
                break;
            }
            prev = Some(tok);
        }
        SampledResponse { tokens, logprobs }
    }

    /// Samples a response at the given softmax temperature; 0 means argmax
    /// with lowest-id tie-breaking. The end token, when emitted, is the last
    /// element and its logprob is recorded like any other.
    pub fn sample_with_temperature<R: RngCore + ?Sized>(
        &self,
        obs: &ObsSequence,
        rng: &mut R,
        max_len: usize,
        temperature: f64,
    ) -> SampledResponse {
        self.rollout(obs.symbols(), max_len, temperature, Some(rng))
    }

    /// Standard (temperature 1) sampling.
    pub fn sample_response<R: RngCore + ?Sized>(
        &self,
        obs: &ObsSequence,
        rng: &mut R,
        max_len: usize,
    ) -> SampledResponse {
        self.sample_with_temperature(obs, rng, max_len, 1.0)
    }

    /// Greedy decode. Returns content tokens only: decoding stops at the end
    /// token without emitting it.
    pub fn greedy_decode(&self, obs: &ObsSequence, max_len: usize) -> Vec<u32> {
        let resp = self.rollout::<rand_chacha::ChaCha8Rng>(obs.symbols(), max_len, 0.0, None);
        content_tokens(&resp.tokens, self.eos_id()).to_vec()
    }
}

/// Strips the trailing end token, if present.
pub fn content_tokens(tokens: &[u32], eos_id: u32) -> &[u32] {
    match tokens.split_last() {
        Some((&last, rest)) if last == eos_id => rest,
        _ => tokens,
    }
}

impl Policy for ToyPolicy {
    fn param_count(&self) -> usize {
        self.w.len()
    }

    fn logprobs(&self, obs: &[u32], tokens: &[u32]) -> Result<Vec<f64>, GrpoError> {
        self.token_logprobs(obs, tokens).map_err(|e| GrpoError::Policy(e.to_string()))
    }

    fn accumulate_weighted_grad(
        &self,
        obs: &[u32],
        tokens: &[u32],
        weights: &[f64],
        grad: &mut [f64],
    ) -> Result<(), GrpoError> {
        self.weighted_grad(obs, tokens, weights, grad)
            .map(|_| ())
            .map_err(|e| GrpoError::Policy(e.to_string()))
    }

    fn sample(&self, obs: &[u32], rng: &mut dyn RngCore, max_len: usize) -> SampledResponse {
        self.check_obs(obs).expect("observation validated at construction");
        self.rollout(obs, max_len, 1.0, Some(rng))
    }

    fn apply_update(&mut self, grad: &[f64], learning_rate: f64) {
        assert_eq!(grad.len(), self.w.len(), "gradient sized to parameters");
        for (w, g) in self.w.iter_mut().zip(grad) {
            *w += learning_rate * g;
        }
    }
}
