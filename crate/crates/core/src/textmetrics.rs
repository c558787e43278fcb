//! Tokenization, edit-distance alignment, WER/CER, and keyword statistics.
//!
//! Alignment is plain Levenshtein with unit costs. Backtracking breaks ties
//! in a fixed order (hit, substitution, deletion, insertion) so the op list
//! is canonical: the same input pair always yields the same ops.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextMetricsError {
    #[error("token at index {0} is empty")]
    EmptyToken(usize),
}

/// Tokenization granularity.
///
/// `Mixed` treats every CJK codepoint as its own token and groups contiguous
/// non-CJK runs into words, which is the usual convention for scoring
/// Mandarin/English code-switched transcripts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenMode {
    Char,
    Word,
    Mixed,
}

/// Characters removed before tokenization.
#[derive(Debug, Clone)]
pub struct TokenizeOptions {
    pub strip: BTreeSet<char>,
}

impl Default for TokenizeOptions {
    fn default() -> Self {
        let strip = ",.;:!?\"'()[]{}<>~`@#$%^&*_+=|\\/“”‘’。，、；：？！（）【】《》…·—"
            .chars()
            .collect();
        TokenizeOptions { strip }
    }
}

/// A tokenized text with the mode it was produced under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    tokens: Vec<String>,
    mode: TokenMode,
}

impl TokenSeq {
    /// Wraps pre-tokenized text. Every token must be non-empty.
    pub fn new(tokens: Vec<String>, mode: TokenMode) -> Result<Self, TextMetricsError> {
        if let Some(i) = tokens.iter().position(|t| t.is_empty()) {
            return Err(TextMetricsError::EmptyToken(i));
        }
        Ok(TokenSeq { tokens, mode })
    }

    pub fn empty(mode: TokenMode) -> Self {
        TokenSeq { tokens: Vec::new(), mode }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined surface form, for logs and second-pass prompts.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

pub(crate) fn is_cjk(c: char) -> bool {
    matches!(c,
        '\u{4E00}'..='\u{9FFF}'   // CJK unified ideographs
        | '\u{3400}'..='\u{4DBF}' // extension A
        | '\u{F900}'..='\u{FAFF}' // compatibility ideographs
        | '\u{3040}'..='\u{309F}' // hiragana
        | '\u{30A0}'..='\u{30FF}' // katakana
        | '\u{AC00}'..='\u{D7AF}' // hangul syllables
    )
}

pub(crate) fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic()
        || matches!(c, '\u{00C0}'..='\u{00FF}' | '\u{0100}'..='\u{017F}')
}

/// Tokenizes with the default strip list.
pub fn tokenize(text: &str, mode: TokenMode) -> TokenSeq {
    tokenize_with(text, mode, &TokenizeOptions::default())
}

/// Tokenizes `text` under `mode`. Stripped characters act as separators.
pub fn tokenize_with(text: &str, mode: TokenMode, opts: &TokenizeOptions) -> TokenSeq {
    let mut tokens: Vec<String> = Vec::new();
    match mode {
        TokenMode::Char => {
            for c in text.chars() {
                if c.is_whitespace() || opts.strip.contains(&c) {
                    continue;
                }
                tokens.push(c.to_string());
            }
        }
        TokenMode::Word => {
            let mut run = String::new();
            for c in text.chars() {
                if c.is_whitespace() || opts.strip.contains(&c) {
                    flush(&mut run, &mut tokens);
                } else {
                    run.push(c);
                }
            }
            flush(&mut run, &mut tokens);
        }
        TokenMode::Mixed => {
            let mut run = String::new();
            for c in text.chars() {
                if c.is_whitespace() || opts.strip.contains(&c) {
                    flush(&mut run, &mut tokens);
                } else if is_cjk(c) {
                    flush(&mut run, &mut tokens);
                    tokens.push(c.to_string());
                } else {
                    run.push(c);
                }
            }
            flush(&mut run, &mut tokens);
        }
    }
    TokenSeq { tokens, mode }
}

fn flush(run: &mut String, tokens: &mut Vec<String>) {
    if !run.is_empty() {
        tokens.push(std::mem::take(run));
    }
}

/// One step of an alignment replay. Substitutions and insertions carry the
/// hypothesis token so the op list alone rebuilds the hypothesis from the
/// reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "token", rename_all = "snake_case")]
pub enum EditOp {
    Hit,
    Substitute(String),
    Delete,
    Insert(String),
}

/// Alignment summary plus the canonical op list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub hits: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub ref_len: usize,
    pub ops: Vec<EditOp>,
}

impl AlignmentResult {
    /// Total edit count (the Levenshtein distance).
    pub fn edits(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Applies the op list to a reference, reproducing the hypothesis.
    pub fn replay(&self, reference: &TokenSeq) -> Vec<String> {
        let mut out = Vec::new();
        let mut r = 0;
        for op in &self.ops {
            match op {
                EditOp::Hit => {
                    out.push(reference.tokens()[r].clone());
                    r += 1;
                }
                EditOp::Substitute(tok) => {
                    out.push(tok.clone());
                    r += 1;
                }
                EditOp::Delete => {
                    r += 1;
                }
                EditOp::Insert(tok) => {
                    out.push(tok.clone());
                }
            }
        }
        out
    }
}

/// Unit-cost edit distance between two slices, O(len(a) * len(b)) time and
/// O(min) memory. Shared by alignment-free callers (hotword windows,
/// consensus checks).
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0usize; short.len() + 1];
    for (i, lt) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, st) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lt != st);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

/// Aligns hypothesis to reference and returns counts plus replayable ops.
///
/// Backtracking prefers hit, then substitution, then deletion, then
/// insertion, checked in that order at every cell, so ties resolve the same
/// way on every run.
pub fn align(reference: &TokenSeq, hypothesis: &TokenSeq) -> AlignmentResult {
    let r = reference.tokens();
    let h = hypothesis.tokens();
    let n = r.len();
    let m = h.len();

    // dp[i][j] = distance between r[..i] and h[..j], flattened row-major.
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for (j, cell) in dp.iter_mut().enumerate().take(m + 1) {
        *cell = j;
    }
    for i in 1..=n {
        dp[i * w] = i;
        for j in 1..=m {
            let sub = dp[(i - 1) * w + (j - 1)] + usize::from(r[i - 1] != h[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + (j - 1)] + 1;
            dp[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut ops_rev: Vec<EditOp> = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let cur = dp[i * w + j];
        if i > 0 && j > 0 && r[i - 1] == h[j - 1] && dp[(i - 1) * w + (j - 1)] == cur {
            ops_rev.push(EditOp::Hit);
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && dp[(i - 1) * w + (j - 1)] + 1 == cur {
            ops_rev.push(EditOp::Substitute(h[j - 1].clone()));
            i -= 1;
            j -= 1;
        } else if i > 0 && dp[(i - 1) * w + j] + 1 == cur {
            ops_rev.push(EditOp::Delete);
            i -= 1;
        } else {
            ops_rev.push(EditOp::Insert(h[j - 1].clone()));
            j -= 1;
        }
    }
    ops_rev.reverse();

    let mut res = AlignmentResult {
        hits: 0,
        substitutions: 0,
        deletions: 0,
        insertions: 0,
        ref_len: n,
        ops: ops_rev,
    };
    for op in &res.ops {
        match op {
            EditOp::Hit => res.hits += 1,
            EditOp::Substitute(_) => res.substitutions += 1,
            EditOp::Delete => res.deletions += 1,
            EditOp::Insert(_) => res.insertions += 1,
        }
    }
    res
}

/// Word error rate: (S + D + I) / ref_len.
///
/// Empty reference: 0.0 when the hypothesis is also empty, otherwise the
/// insertion count (each stray token counts a full unit of error).
pub fn wer(reference: &TokenSeq, hypothesis: &TokenSeq) -> f64 {
    let a = align(reference, hypothesis);
    if a.ref_len == 0 {
        return a.insertions as f64;
    }
    a.edits() as f64 / a.ref_len as f64
}

/// Character error rate over raw strings.
pub fn cer(reference: &str, hypothesis: &str) -> f64 {
    wer(
        &tokenize(reference, TokenMode::Char),
        &tokenize(hypothesis, TokenMode::Char),
    )
}

/// Symmetric error rate used for pairwise transcript agreement:
/// edit distance divided by the longer length. Unlike [`wer`] this is
/// invariant under swapping the arguments.
pub fn symmetric_wer(a: &TokenSeq, b: &TokenSeq) -> f64 {
    let d = edit_distance(a.tokens(), b.tokens());
    d as f64 / a.len().max(b.len()).max(1) as f64
}

/// Occurrence counts and precision/recall for a keyword list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordStats {
    pub keyword_occurrences_ref: usize,
    pub keyword_occurrences_hyp: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Non-overlapping, leftmost-greedy occurrence count of `needle` in
/// `haystack`. An empty needle never occurs.
pub fn count_occurrences(haystack: &[String], needle: &[String]) -> usize {
    if needle.is_empty() || haystack.len() < needle.len() {
        return 0;
    }
    let mut count = 0;
    let mut i = 0;
    while i + needle.len() <= haystack.len() {
        if haystack[i..i + needle.len()] == *needle {
            count += 1;
            i += needle.len();
        } else {
            i += 1;
        }
    }
    count
}

/// Aggregates keyword occurrences over reference and hypothesis.
///
/// Duplicate keywords are counted once; empty keyword sequences are ignored.
/// `matched` sums, per keyword, the smaller of its two occurrence counts, so
/// it never exceeds either total. Recall is 1.0 when the reference contains
/// no keywords (nothing to recall); precision uses max(1, hyp occurrences)
/// so a hypothesis with no keyword mentions scores 0 of 1 rather than 0/0.
pub fn keyword_stats(
    reference: &TokenSeq,
    hypothesis: &TokenSeq,
    keywords: &[TokenSeq],
) -> KeywordStats {
    let mut seen: BTreeSet<&[String]> = BTreeSet::new();
    let mut occ_ref = 0;
    let mut occ_hyp = 0;
    let mut matched = 0;
    for kw in keywords {
        if kw.is_empty() || !seen.insert(kw.tokens()) {
            continue;
        }
        let r = count_occurrences(reference.tokens(), kw.tokens());
        let h = count_occurrences(hypothesis.tokens(), kw.tokens());
        occ_ref += r;
        occ_hyp += h;
        matched += r.min(h);
    }
    let recall = if occ_ref == 0 { 1.0 } else { matched as f64 / occ_ref as f64 };
    let precision = matched as f64 / occ_hyp.max(1) as f64;
    KeywordStats {
        keyword_occurrences_ref: occ_ref,
        keyword_occurrences_hyp: occ_hyp,
        matched,
        precision,
        recall,
    }
}
