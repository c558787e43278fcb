//! Composite sequence-level reward for transcription hypotheses.
//!
//! Four signals are combined:
//!
//! * accuracy: `max(0, 1 - WER)`, optionally clamped into [0, 1]
//! * keyword fidelity: `0.5 * recall + 0.5 * precision`, only when the
//!   utterance has keywords attached
//! * hallucination penalty: `-gamma * hallucinated_tokens / max(1, |hyp|)`,
//!   where hallucinated tokens are found by a repeated-n-gram detector that
//!   exempts repetitions genuinely present in the reference
//! * language consistency: dominant-script comparison; a mismatch overrides
//!   everything and pins the total reward to -1
//!
//! The total is a per-utterance scalar; broadcasting it over response tokens
//! is the trainer's job.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textmetrics::{self, keyword_stats, wer, KeywordStats, TokenSeq};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("hallucination_gamma must be >= 0, got {0}")]
    InvalidGamma(f64),
    #[error("repeat_min_run must be >= 2, got {0}")]
    InvalidMinRun(usize),
    #[error("ngram_max must be >= 1")]
    InvalidNgramMax,
    #[error("keyword_weight must be finite and >= 0, got {0}")]
    InvalidKeywordWeight(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Weight on the keyword fidelity term.
    pub keyword_weight: f64,
    /// Scale of the hallucination penalty.
    pub hallucination_gamma: f64,
    /// Minimum consecutive repetitions of an n-gram for the detector to fire.
    pub repeat_min_run: usize,
    /// Largest n-gram length the detector scans.
    pub ngram_max: usize,
    /// Clamp the accuracy term into [0, 1] (off: only the lower clamp at 0
    /// applies, which is already implied by max(0, .)).
    pub clamp_accuracy: bool,
    /// Apply the language-consistency override. Disabled only for ablations.
    pub enforce_language_match: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            keyword_weight: 1.0,
            hallucination_gamma: 1.0,
            repeat_min_run: 4,
            ngram_max: 5,
            clamp_accuracy: true,
            enforce_language_match: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !self.hallucination_gamma.is_finite() || self.hallucination_gamma < 0.0 {
            return Err(RewardError::InvalidGamma(self.hallucination_gamma));
        }
        if self.repeat_min_run < 2 {
            return Err(RewardError::InvalidMinRun(self.repeat_min_run));
        }
        if self.ngram_max == 0 {
            return Err(RewardError::InvalidNgramMax);
        }
        if !self.keyword_weight.is_finite() || self.keyword_weight < 0.0 {
            return Err(RewardError::InvalidKeywordWeight(self.keyword_weight));
        }
        Ok(())
    }
}

/// Per-term decomposition of the reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub accuracy: f64,
    /// Absent when the utterance carries no keywords.
    pub keyword: Option<f64>,
    pub hallucination: f64,
    /// Outcome of the language gate as applied to the total. Always true
    /// when enforcement is disabled.
    pub language_match: bool,
    pub total: f64,
}

/// Accuracy term: max(0, 1 - WER), clamped to [0, 1] when `clamp` is set.
/// The clamp only matters for exotic WER conventions; with WER >= 0 the
/// value never exceeds 1 anyway.
pub fn accuracy_reward(reference: &TokenSeq, hypothesis: &TokenSeq, clamp: bool) -> f64 {
    let r = (1.0 - wer(reference, hypothesis)).max(0.0);
    if clamp {
        r.min(1.0)
    } else {
        r
    }
}

/// Keyword fidelity: equal-weight blend of recall and precision.
pub fn keyword_reward(stats: &KeywordStats) -> f64 {
    0.5 * stats.recall + 0.5 * stats.precision
}

/// A maximal run of a repeated n-gram inside a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatRun {
    /// n-gram length.
    pub ngram_len: usize,
    /// Token index where the run starts.
    pub start: usize,
    /// How many consecutive copies of the n-gram the run contains.
    pub repeats: usize,
}

/// Finds maximal consecutive n-gram repetitions with at least `min_run`
/// copies, for n in 1..=ngram_max. Runs of different n-gram lengths are
/// reported independently.
pub fn repeat_runs(seq: &TokenSeq, min_run: usize, ngram_max: usize) -> Vec<RepeatRun> {
    let toks = seq.tokens();
    let mut runs = Vec::new();
    for n in 1..=ngram_max.min(toks.len()) {
        let mut i = 0;
        while i + n <= toks.len() {
            let mut k = 1;
            while i + (k + 1) * n <= toks.len() && toks[i + k * n..i + (k + 1) * n] == toks[i..i + n]
            {
                k += 1;
            }
            if k >= min_run {
                runs.push(RepeatRun { ngram_len: n, start: i, repeats: k });
                i += k * n;
            } else {
                i += 1;
            }
        }
    }
    runs
}

/// Longest consecutive run of `gram` anywhere in `toks` (aligned copies,
/// back to back). Zero when the gram never occurs.
fn max_consecutive_repeats(toks: &[String], gram: &[String]) -> usize {
    let n = gram.len();
    if n == 0 || toks.len() < n {
        return 0;
    }
    let mut best = 0;
    let mut i = 0;
    while i + n <= toks.len() {
        if toks[i..i + n] == *gram {
            let mut k = 1;
            while i + (k + 1) * n <= toks.len() && toks[i + k * n..i + (k + 1) * n] == *gram {
                k += 1;
            }
            best = best.max(k);
            i += k * n;
        } else {
            i += 1;
        }
    }
    best
}

/// Counts hypothesis tokens flagged as hallucinated repetition.
///
/// For each qualifying run in the hypothesis, as many leading copies as the
/// reference itself repeats that n-gram are exempt (genuine repetition); the
/// remaining copies' tokens are flagged. A position flagged by runs of
/// several n-gram lengths counts once.
pub fn hallucinated_token_count(
    reference: &TokenSeq,
    hypothesis: &TokenSeq,
    cfg: &RewardConfig,
) -> usize {
    let hyp = hypothesis.tokens();
    let mut flagged = vec![false; hyp.len()];
    for run in repeat_runs(hypothesis, cfg.repeat_min_run, cfg.ngram_max) {
        let gram = &hyp[run.start..run.start + run.ngram_len];
        let genuine = max_consecutive_repeats(reference.tokens(), gram);
        let exempt = run.repeats.min(genuine);
        let from = run.start + exempt * run.ngram_len;
        let to = run.start + run.repeats * run.ngram_len;
        for slot in &mut flagged[from..to] {
            *slot = true;
        }
    }
    flagged.iter().filter(|&&f| f).count()
}

/// Hallucination penalty: -gamma * flagged / max(1, |hyp|). Always in
/// [-gamma, 0].
pub fn hallucination_penalty(
    reference: &TokenSeq,
    hypothesis: &TokenSeq,
    cfg: &RewardConfig,
) -> f64 {
    let flagged = hallucinated_token_count(reference, hypothesis, cfg);
    -cfg.hallucination_gamma * flagged as f64 / hypothesis.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Script {
    Cjk,
    Latin,
    Neutral,
}

fn dominant_script(seq: &TokenSeq) -> Script {
    let mut cjk = 0usize;
    let mut latin = 0usize;
    for tok in seq.tokens() {
        for c in tok.chars() {
            if textmetrics::is_cjk(c) {
                cjk += 1;
            } else if textmetrics::is_latin_letter(c) {
                latin += 1;
            }
        }
    }
    if cjk > latin {
        Script::Cjk
    } else if latin > cjk {
        Script::Latin
    } else {
        Script::Neutral
    }
}

/// Dominant-script agreement between reference and hypothesis.
///
/// Counts CJK vs Latin letters over all tokens; digits and symbols are
/// neutral. An empty or script-neutral side always matches: absence of
/// evidence is not a mismatch.
pub fn language_match(reference: &TokenSeq, hypothesis: &TokenSeq) -> bool {
    match (dominant_script(reference), dominant_script(hypothesis)) {
        (Script::Neutral, _) | (_, Script::Neutral) => true,
        (a, b) => a == b,
    }
}

/// Full reward composition for one hypothesis.
///
/// `keywords` empty means the keyword term is absent (not zero-weighted
/// vacuous credit). A language mismatch overrides the sum and returns
/// exactly -1.
pub fn compose(
    reference: &TokenSeq,
    hypothesis: &TokenSeq,
    keywords: &[TokenSeq],
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let accuracy = accuracy_reward(reference, hypothesis, cfg.clamp_accuracy);
    let keyword = if keywords.iter().any(|k| !k.is_empty()) {
        Some(keyword_reward(&keyword_stats(reference, hypothesis, keywords)))
    } else {
        None
    };
    let hallucination = hallucination_penalty(reference, hypothesis, cfg);
    let matched = !cfg.enforce_language_match || language_match(reference, hypothesis);
    let total = if matched {
        accuracy + cfg.keyword_weight * keyword.unwrap_or(0.0) + hallucination
    } else {
        -1.0
    };
    RewardBreakdown {
        accuracy,
        keyword,
        hallucination,
        language_match: matched,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textmetrics::{tokenize, TokenMode};

    fn words(s: &str) -> TokenSeq {
        tokenize(s, TokenMode::Word)
    }

    fn mixed(s: &str) -> TokenSeq {
        tokenize(s, TokenMode::Mixed)
    }

    #[test]
    fn accuracy_is_one_minus_wer_floored() {
        let r = words("a b c d");
        assert!((accuracy_reward(&r, &words("a b c d"), true) - 1.0).abs() < 1e-12);
        assert!((accuracy_reward(&r, &words("a b c x"), true) - 0.75).abs() < 1e-12);
        // WER 1.5 (6 edits / 4 ref tokens) floors at zero
        let h = words("x y z w q r");
        assert_eq!(accuracy_reward(&r, &h, true), 0.0);
    }

    #[test]
    fn keyword_reward_blends_recall_and_precision() {
        let r = words("call bob and alice");
        let h = words("call bob and bob");
        let s = keyword_stats(&r, &h, &[words("bob"), words("alice")]);
        // ref: bob 1, alice 1; hyp: bob 2, alice 0 -> matched 1
        // recall 1/2, precision 1/2
        assert!((keyword_reward(&s) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn repeat_runs_finds_maximal_runs() {
        let s = words("x x x x x");
        let runs = repeat_runs(&s, 4, 5);
        assert_eq!(runs, vec![RepeatRun { ngram_len: 1, start: 0, repeats: 5 }]);

        let s = words("a b a b a b a b");
        let runs = repeat_runs(&s, 4, 5);
        assert_eq!(runs, vec![RepeatRun { ngram_len: 2, start: 0, repeats: 4 }]);

        // below the threshold: nothing fires
        let s = words("x x x");
        assert!(repeat_runs(&s, 4, 5).is_empty());
    }

    #[test]
    fn hallucination_flags_excess_only() {
        let cfg = RewardConfig::default();
        // ref "a b", hyp "a b" + six copies of "x": the x-run is pure noise
        let r = words("a b");
        let h = words("a b x x x x x x");
        assert_eq!(hallucinated_token_count(&r, &h, &cfg), 6);
        assert!((hallucination_penalty(&r, &h, &cfg) - (-0.75)).abs() < 1e-12);
    }

    #[test]
    fn genuine_repetition_is_exempt() {
        let cfg = RewardConfig::default();
        // the reference really says it five times
        let r = words("again again again again again");
        let h = words("again again again again again");
        assert_eq!(hallucinated_token_count(&r, &h, &cfg), 0);
        // hypothesis stutters two extra copies beyond the reference run
        let h = words("again again again again again again again");
        assert_eq!(hallucinated_token_count(&r, &h, &cfg), 2);
    }

    #[test]
    fn hallucination_zero_without_qualifying_run() {
        let cfg = RewardConfig::default();
        let r = words("a b c");
        let h = words("x y z x y z");
        assert_eq!(hallucinated_token_count(&r, &h, &cfg), 0);
        assert_eq!(hallucination_penalty(&r, &h, &cfg), 0.0);
    }

    #[test]
    fn hallucination_penalty_bounded_by_gamma() {
        let cfg = RewardConfig { hallucination_gamma: 0.7, ..RewardConfig::default() };
        let r = TokenSeq::empty(TokenMode::Word);
        let h = words("x x x x x x x x");
        let p = hallucination_penalty(&r, &h, &cfg);
        assert!((p - (-0.7)).abs() < 1e-12);
    }

    #[test]
    fn overlapping_ngram_lengths_flag_once() {
        let cfg = RewardConfig::default();
        let r = words("z");
        // "a a a a a a a a": the 1-gram run flags all 8; 2-gram "a a" also
        // runs 4 times; the union must still be 8, not more.
        let h = words("a a a a a a a a");
        assert_eq!(hallucinated_token_count(&r, &h, &cfg), 8);
    }

    #[test]
    fn language_match_by_dominant_script() {
        assert!(language_match(&mixed("打开空调"), &mixed("打开空调")));
        assert!(!language_match(&mixed("打开空调"), &words("open the ac")));
        // code-switched sides: the majority script decides
        let r = mixed("打开空调 ok"); // 4 CJK vs 2 Latin -> CJK
        assert!(language_match(&r, &mixed("空调坏了 no"))); // 4 vs 2 -> CJK
        assert!(!language_match(&r, &mixed("空调 broken"))); // 2 vs 6 -> Latin
    }

    #[test]
    fn empty_or_neutral_hypothesis_matches() {
        let r = mixed("打开空调");
        assert!(language_match(&r, &TokenSeq::empty(TokenMode::Mixed)));
        assert!(language_match(&r, &words("123 456")));
        assert!(language_match(&TokenSeq::empty(TokenMode::Word), &words("abc")));
    }

    #[test]
    fn compose_perfect_hypothesis_with_keywords() {
        let cfg = RewardConfig::default();
        let r = words("play jazz on spotify");
        let b = compose(&r, &r, &[words("spotify")], &cfg);
        assert!((b.accuracy - 1.0).abs() < 1e-12);
        assert_eq!(b.keyword, Some(1.0));
        assert_eq!(b.hallucination, 0.0);
        assert!(b.language_match);
        assert!((b.total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn compose_without_keywords_omits_term() {
        let cfg = RewardConfig::default();
        let r = words("play jazz");
        let b = compose(&r, &r, &[], &cfg);
        assert_eq!(b.keyword, None);
        assert!((b.total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn language_mismatch_pins_total() {
        let cfg = RewardConfig::default();
        let r = mixed("打开空调请");
        let h = words("open the air conditioner");
        let b = compose(&r, &h, &[words("空调")], &cfg);
        assert!(!b.language_match);
        assert_eq!(b.total, -1.0);
    }

    #[test]
    fn disabled_language_gate_reports_match() {
        let cfg = RewardConfig { enforce_language_match: false, ..RewardConfig::default() };
        let r = mixed("打开空调请");
        let h = words("open the ac");
        let b = compose(&r, &h, &[], &cfg);
        assert!(b.language_match);
        assert!(b.total > -1.0);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = RewardConfig { hallucination_gamma: -0.1, ..RewardConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RewardConfig { repeat_min_run: 1, ..RewardConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = RewardConfig { ngram_max: 0, ..RewardConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(RewardConfig::default().validate().is_ok());
    }
}
