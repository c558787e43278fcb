//! Curation of RL fine-tuning data.
//!
//! Works over transcription records that carry a base-model hypothesis,
//! up to three external-system hypotheses, and optionally a human reference.
//! Provides: hard-case mining by external consensus vs base divergence,
//! long-audio selection, hallucination-sample detection (spurious vs
//! genuinely repetitive), keyword attachment through a pluggable extractor
//! (remote endpoint with record/replay, or a corpus-frequency heuristic),
//! contextual-piece filtering and mixing, and assembly of the five-subset
//! training manifest.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rewards::{self, RewardConfig};
use crate::textmetrics::{count_occurrences, symmetric_wer, tokenize, wer, TokenMode};

#[derive(Debug, Error, PartialEq)]
pub enum CurationError {
    #[error("keyword extractor failed: {0}")]
    ExtractorFailure(String),
    #[error("replay transport has no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("context corpus too small: need {needed} other samples with pieces, found {got}")]
    CorpusTooSmall { needed: usize, got: usize },
    #[error("invalid thresholds: {0}")]
    BadThresholds(String),
}

/// Hypotheses from the three external reference systems.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalHyps {
    #[serde(rename = "sysA", default, skip_serializing_if = "Option::is_none")]
    pub sys_a: Option<String>,
    #[serde(rename = "sysB", default, skip_serializing_if = "Option::is_none")]
    pub sys_b: Option<String>,
    #[serde(rename = "sysC", default, skip_serializing_if = "Option::is_none")]
    pub sys_c: Option<String>,
}

impl ExternalHyps {
    /// All three hypotheses, in fixed system order, if present.
    pub fn complete(&self) -> Option<[&str; 3]> {
        match (&self.sys_a, &self.sys_b, &self.sys_c) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        }
    }
}

/// One corpus row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub base_hyp: String,
    #[serde(default)]
    pub external_hyps: ExternalHyps,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationThresholds {
    /// Pairwise agreement bound: all three external pairs must sit strictly
    /// under this for a consensus pseudo-label.
    pub consensus_wer: f64,
    /// Base-vs-consensus divergence must strictly exceed this.
    pub divergence_wer: f64,
    /// Long-audio cutoff in seconds (strictly greater qualifies).
    pub long_audio_s: f64,
    /// Keywords kept per transcript by extractors.
    pub top_k_keywords: usize,
}

impl Default for CurationThresholds {
    fn default() -> Self {
        CurationThresholds {
            consensus_wer: 0.05,
            divergence_wer: 0.10,
            long_audio_s: 20.0,
            top_k_keywords: 5,
        }
    }
}

impl CurationThresholds {
    pub fn validate(&self) -> Result<(), CurationError> {
        for (name, v) in [
            ("consensus_wer", self.consensus_wer),
            ("divergence_wer", self.divergence_wer),
            ("long_audio_s", self.long_audio_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(CurationError::BadThresholds(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if self.top_k_keywords == 0 {
            return Err(CurationError::BadThresholds("top_k_keywords must be >= 1".into()));
        }
        Ok(())
    }
}

/// Why a record was not mined, keyed by id.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SkipNote {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MiningOutcome {
    pub selected: Vec<String>,
    pub skipped: Vec<SkipNote>,
}

/// Mines hard cases from unlabeled data: where the three external systems
/// agree with each other (every pairwise symmetric error rate strictly under
/// the consensus bound) their medoid acts as a pseudo-reference, and the
/// record is selected when the base hypothesis diverges from it by strictly
/// more than the divergence bound.
pub fn mine_hardcases(
    records: &[UtteranceRecord],
    thresholds: &CurationThresholds,
    mode: TokenMode,
) -> Result<MiningOutcome, CurationError> {
    thresholds.validate()?;
    let mut out = MiningOutcome::default();
    for record in records {
        let Some(externals) = record.external_hyps.complete() else {
            out.skipped.push(SkipNote {
                id: record.id.clone(),
                reason: "missing external hypotheses".into(),
            });
            continue;
        };
        let seqs: Vec<_> = externals.iter().map(|h| tokenize(h, mode)).collect();
        let pair = |i: usize, j: usize| symmetric_wer(&seqs[i], &seqs[j]);
        let d01 = pair(0, 1);
        let d02 = pair(0, 2);
        let d12 = pair(1, 2);
        if !(d01 < thresholds.consensus_wer
            && d02 < thresholds.consensus_wer
            && d12 < thresholds.consensus_wer)
        {
            out.skipped.push(SkipNote {
                id: record.id.clone(),
                reason: format!(
                    "externals disagree (pairwise {:.4}/{:.4}/{:.4})",
                    d01, d02, d12
                ),
            });
            continue;
        }
        // medoid: smallest summed distance to the others; first index wins
        // ties so the outcome never depends on iteration order
        let sums = [d01 + d02, d01 + d12, d02 + d12];
        let medoid = sums
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("three candidates");
        let divergence = wer(&seqs[medoid], &tokenize(&record.base_hyp, mode));
        if divergence > thresholds.divergence_wer {
            out.selected.push(record.id.clone());
        } else {
            out.skipped.push(SkipNote {
                id: record.id.clone(),
                reason: format!("base close to consensus (divergence {:.4})", divergence),
            });
        }
    }
    Ok(out)
}

/// Ids of records strictly longer than the long-audio cutoff.
pub fn select_long_audio(
    records: &[UtteranceRecord],
    thresholds: &CurationThresholds,
) -> Result<Vec<String>, CurationError> {
    thresholds.validate()?;
    Ok(records
        .iter()
        .filter(|r| r.duration_s > thresholds.long_audio_s)
        .map(|r| r.id.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationClass {
    /// The repetition has no support in the reference.
    Spurious,
    /// The reference itself repeats; a model must not be penalized here.
    GenuineRepetition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationSample {
    pub id: String,
    pub class: HallucinationClass,
}

/// Finds referenced records whose base hypothesis contains qualifying
/// n-gram repetition runs, split into spurious repetitions (flagged by the
/// reward detector) and genuine ones (runs fully covered by the reference).
/// Both classes matter for training: the first as positives for the
/// penalty, the second as counterexamples that must stay unpenalized.
pub fn detect_hallucination_samples(
    records: &[UtteranceRecord],
    reward_cfg: &RewardConfig,
    mode: TokenMode,
) -> Vec<HallucinationSample> {
    let mut out = Vec::new();
    for record in records {
        let Some(reference) = &record.reference else { continue };
        let hyp = tokenize(&record.base_hyp, mode);
        let runs = rewards::repeat_runs(&hyp, reward_cfg.repeat_min_run, reward_cfg.ngram_max);
        if runs.is_empty() {
            continue;
        }
        let reference = tokenize(reference, mode);
        let class = if rewards::hallucinated_token_count(&reference, &hyp, reward_cfg) > 0 {
            HallucinationClass::Spurious
        } else {
            HallucinationClass::GenuineRepetition
        };
        out.push(HallucinationSample { id: record.id.clone(), class });
    }
    out
}

/// Pulls keywords out of one transcript.
pub trait KeywordExtractor {
    fn extract(&mut self, transcript: &str) -> Result<Vec<String>, CurationError>;
}

/// Corpus-frequency heuristic: rare tokens are likelier to be the named
/// entities worth biasing toward. Candidates are unique transcript tokens of
/// at least two characters, ranked by corpus document frequency ascending
/// (ties by surface), truncated to `top_k`.
#[derive(Debug, Clone)]
pub struct FrequencyExtractor {
    doc_freq: HashMap<String, usize>,
    top_k: usize,
    mode: TokenMode,
}

impl FrequencyExtractor {
    /// Builds corpus statistics from references (base hypotheses for
    /// unreferenced rows).
    pub fn from_records(records: &[UtteranceRecord], mode: TokenMode, top_k: usize) -> Self {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        for record in records {
            let text = record.reference.as_deref().unwrap_or(&record.base_hyp);
            let mut seen: BTreeSet<String> = BTreeSet::new();
            for tok in tokenize(text, mode).tokens() {
                seen.insert(tok.clone());
            }
            for tok in seen {
                *doc_freq.entry(tok).or_insert(0) += 1;
            }
        }
        FrequencyExtractor { doc_freq, top_k, mode }
    }
}

impl KeywordExtractor for FrequencyExtractor {
    fn extract(&mut self, transcript: &str) -> Result<Vec<String>, CurationError> {
        let mut candidates: Vec<String> = Vec::new();
        for tok in tokenize(transcript, self.mode).tokens() {
            if tok.chars().count() >= 2 && !candidates.contains(tok) {
                candidates.push(tok.clone());
            }
        }
        candidates.sort_by(|a, b| {
            let fa = self.doc_freq.get(a).copied().unwrap_or(0);
            let fb = self.doc_freq.get(b).copied().unwrap_or(0);
            fa.cmp(&fb).then(a.cmp(b))
        });
        candidates.truncate(self.top_k);
        Ok(candidates)
    }
}

/// One request/response exchange with the keyword endpoint, as logged for
/// replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub request: serde_json::Value,
    pub response: serde_json::Value,
}

/// Transport to the keyword endpoint: POST a JSON body, get JSON back.
pub trait KeywordTransport {
    fn post(&mut self, request: &serde_json::Value) -> Result<serde_json::Value, CurationError>;
}

/// Extractor backed by a remote endpoint speaking
/// `{"transcript": ...}` -> `{"keywords": [...]}`. Every exchange is kept in
/// an in-memory log the caller can persist and later feed to
/// [`ReplayTransport`] for offline reruns.
pub struct EndpointExtractor {
    transport: Box<dyn KeywordTransport>,
    log: Vec<ReplayEntry>,
}

impl EndpointExtractor {
    pub fn new(transport: Box<dyn KeywordTransport>) -> Self {
        EndpointExtractor { transport, log: Vec::new() }
    }

    pub fn replay_log(&self) -> &[ReplayEntry] {
        &self.log
    }

    pub fn take_replay_log(&mut self) -> Vec<ReplayEntry> {
        std::mem::take(&mut self.log)
    }
}

impl KeywordExtractor for EndpointExtractor {
    fn extract(&mut self, transcript: &str) -> Result<Vec<String>, CurationError> {
        let request = serde_json::json!({ "transcript": transcript });
        let response = self.transport.post(&request)?;
        let keywords = response
            .get("keywords")
            .and_then(|k| k.as_array())
            .ok_or_else(|| {
                CurationError::ExtractorFailure(format!(
                    "endpoint response missing keywords array: {response}"
                ))
            })?
            .iter()
            .map(|v| {
                v.as_str().map(str::to_string).ok_or_else(|| {
                    CurationError::ExtractorFailure(format!("non-string keyword in {response}"))
                })
            })
            .collect::<Result<Vec<String>, _>>()?;
        self.log.push(ReplayEntry { request, response });
        Ok(keywords)
    }
}

/// Offline transport answering from a recorded log; unknown requests fail
/// loudly instead of silently inventing data.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    responses: HashMap<String, serde_json::Value>,
}

impl ReplayTransport {
    pub fn from_entries(entries: &[ReplayEntry]) -> Self {
        let mut responses = HashMap::new();
        for e in entries {
            responses.insert(e.request.to_string(), e.response.clone());
        }
        ReplayTransport { responses }
    }
}

impl KeywordTransport for ReplayTransport {
    fn post(&mut self, request: &serde_json::Value) -> Result<serde_json::Value, CurationError> {
        self.responses
            .get(&request.to_string())
            .cloned()
            .ok_or_else(|| CurationError::ReplayMiss(request.to_string()))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AttachOutcome {
    /// Records that already had keywords and were left untouched.
    pub passthrough: usize,
    /// Records whose keywords came from the extractor.
    pub extracted: usize,
    /// Records with neither keywords nor a reference transcript.
    pub skipped_no_transcript: usize,
    /// Records served by the fallback extractor after a primary failure.
    pub fallback_used: usize,
    pub warnings: Vec<String>,
}

/// Fills in missing keywords from the reference transcript. Existing
/// keywords pass through untouched. When the primary extractor fails on a
/// record the fallback (if any) takes over with a warning; without a
/// fallback the failure propagates.
pub fn attach_keywords(
    records: &mut [UtteranceRecord],
    primary: &mut dyn KeywordExtractor,
    mut fallback: Option<&mut dyn KeywordExtractor>,
) -> Result<AttachOutcome, CurationError> {
    let mut out = AttachOutcome::default();
    for record in records.iter_mut() {
        if !record.keywords.is_empty() {
            out.passthrough += 1;
            continue;
        }
        let Some(transcript) = record.reference.clone() else {
            out.skipped_no_transcript += 1;
            continue;
        };
        match primary.extract(&transcript) {
            Ok(keywords) => {
                record.keywords = keywords;
                out.extracted += 1;
            }
            Err(err) => match fallback.as_deref_mut() {
                Some(fb) => {
                    record.keywords = fb.extract(&transcript)?;
                    out.extracted += 1;
                    out.fallback_used += 1;
                    out.warnings.push(format!("{}: primary extractor failed ({err})", record.id));
                }
                None => return Err(err),
            },
        }
    }
    Ok(out)
}

/// A sample's candidate contextual pieces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextSample {
    pub id: String,
    #[serde(default)]
    pub pieces: Vec<String>,
}

/// Keeps pieces containing at least one keyword (token-level containment).
/// With no keywords nothing is relevant.
pub fn filter_contexts(pieces: &[String], keywords: &[String], mode: TokenMode) -> Vec<String> {
    let keyword_tokens: Vec<Vec<String>> = keywords
        .iter()
        .map(|k| tokenize(k, mode).tokens().to_vec())
        .filter(|t| !t.is_empty())
        .collect();
    if keyword_tokens.is_empty() {
        return Vec::new();
    }
    pieces
        .iter()
        .filter(|piece| {
            let toks = tokenize(piece, mode);
            keyword_tokens.iter().any(|k| count_occurrences(toks.tokens(), k) > 0)
        })
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPiece {
    pub text: String,
    pub relevant: bool,
    pub source_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixedContexts {
    pub id: String,
    pub contexts: Vec<ContextPiece>,
}

const IRRELEVANT_PER_SAMPLE: usize = 5;

/// Combines a sample's relevant pieces with exactly five irrelevant pieces
/// drawn (without replacement) from other samples' pieces, shuffled
/// together. Needs at least five other samples contributing pieces.
pub fn mix_irrelevant_contexts<R: RngCore>(
    sample_id: &str,
    relevant: &[String],
    corpus: &[ContextSample],
    rng: &mut R,
) -> Result<MixedContexts, CurationError> {
    let mut pool: Vec<(usize, &str, &str)> = Vec::new();
    let mut donors: BTreeSet<&str> = BTreeSet::new();
    for (i, other) in corpus.iter().enumerate() {
        if other.id == sample_id {
            continue;
        }
        for piece in &other.pieces {
            pool.push((i, other.id.as_str(), piece.as_str()));
            donors.insert(other.id.as_str());
        }
    }
    if donors.len() < IRRELEVANT_PER_SAMPLE || pool.len() < IRRELEVANT_PER_SAMPLE {
        return Err(CurationError::CorpusTooSmall {
            needed: IRRELEVANT_PER_SAMPLE,
            got: donors.len().min(pool.len()),
        });
    }
    // uniform draw of five pieces without replacement
    for i in 0..IRRELEVANT_PER_SAMPLE {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut contexts: Vec<ContextPiece> = relevant
        .iter()
        .map(|text| ContextPiece {
            text: text.clone(),
            relevant: true,
            source_id: sample_id.to_string(),
        })
        .collect();
    for &(_, source_id, text) in &pool[..IRRELEVANT_PER_SAMPLE] {
        contexts.push(ContextPiece {
            text: text.to_string(),
            relevant: false,
            source_id: source_id.to_string(),
        });
    }
    // shuffle so relevance is not positional
    for i in (1..contexts.len()).rev() {
        let j = rng.random_range(0..=i);
        contexts.swap(i, j);
    }
    Ok(MixedContexts { id: sample_id.to_string(), contexts })
}

/// Per-subset sample targets for the training manifest.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SubsetTargets {
    pub hardcase: usize,
    pub long_audio: usize,
    pub hallucination: usize,
    pub keyword: usize,
    pub regular: usize,
}

impl Default for SubsetTargets {
    fn default() -> Self {
        SubsetTargets {
            hardcase: 20_000,
            long_audio: 20_000,
            hallucination: 20_000,
            keyword: 20_000,
            regular: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SubsetSelection {
    pub target: usize,
    pub selected: Vec<String>,
    pub shortfall: usize,
}

/// The assembled training set: five disjoint subsets with shortfall
/// accounting. Serialization is canonical (sorted keys, sorted ids) so two
/// runs with the same inputs and seed produce identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RlManifest {
    pub seed: u64,
    pub subsets: BTreeMap<String, SubsetSelection>,
    pub total_selected: usize,
    pub notes: Vec<String>,
}

fn draw_subset(
    eligible: &BTreeSet<String>,
    taken: &BTreeSet<String>,
    target: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let mut pool: Vec<&String> = eligible.iter().filter(|id| !taken.contains(*id)).collect();
    let k = target.min(pool.len());
    for i in 0..k {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut chosen: Vec<String> = pool[..k].iter().map(|s| s.to_string()).collect();
    chosen.sort_unstable();
    chosen
}

/// Builds the five-subset manifest. Subsets are filled in a fixed priority
/// order (hard cases, long audio, hallucination, keyword, regular) and kept
/// disjoint: a record assigned to an earlier subset is no longer eligible
/// for later ones. The regular subset draws from records untouched by the
/// other four. Undersupplied subsets are reported, never silently padded.
pub fn assemble_rl_manifest(
    records: &[UtteranceRecord],
    hardcase_ids: &[String],
    long_ids: &[String],
    hallucination: &[HallucinationSample],
    targets: &SubsetTargets,
    seed: u64,
) -> RlManifest {
    let all_ids: BTreeSet<String> = records.iter().map(|r| r.id.clone()).collect();
    let keyword_ids: BTreeSet<String> = records
        .iter()
        .filter(|r| !r.keywords.is_empty())
        .map(|r| r.id.clone())
        .collect();
    let to_set = |ids: &[String]| -> BTreeSet<String> {
        ids.iter().filter(|id| all_ids.contains(*id)).cloned().collect()
    };
    let hardcase_set = to_set(hardcase_ids);
    let long_set = to_set(long_ids);
    let halluc_set: BTreeSet<String> = hallucination
        .iter()
        .filter(|h| all_ids.contains(&h.id))
        .map(|h| h.id.clone())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut subsets: BTreeMap<String, SubsetSelection> = BTreeMap::new();
    let mut notes = Vec::new();

    let planned: [(&str, &BTreeSet<String>, usize); 4] = [
        ("hardcase", &hardcase_set, targets.hardcase),
        ("long_audio", &long_set, targets.long_audio),
        ("hallucination", &halluc_set, targets.hallucination),
        ("keyword", &keyword_ids, targets.keyword),
    ];
    for (name, eligible, target) in planned {
        let selected = draw_subset(eligible, &taken, target, &mut rng);
        taken.extend(selected.iter().cloned());
        let shortfall = target - selected.len();
        if shortfall > 0 {
            notes.push(format!(
                "{name}: {} eligible after earlier subsets, short {shortfall} of {target}",
                selected.len()
            ));
        }
        subsets.insert(name.to_string(), SubsetSelection { target, selected, shortfall });
    }

    let regular_pool: BTreeSet<String> =
        all_ids.iter().filter(|id| !taken.contains(*id)).cloned().collect();
    let selected = draw_subset(&regular_pool, &taken, targets.regular, &mut rng);
    let shortfall = targets.regular - selected.len();
    if shortfall > 0 {
        notes.push(format!(
            "regular: {} unassigned records left, short {shortfall} of {}",
            selected.len(),
            targets.regular
        ));
    }
    taken.extend(selected.iter().cloned());
    let total_selected = taken.len();
    subsets.insert(
        "regular".to_string(),
        SubsetSelection { target: targets.regular, selected, shortfall },
    );

    RlManifest { seed, subsets, total_selected, notes }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, duration_s: f64, base: &str, externals: Option<[&str; 3]>) -> UtteranceRecord {
        UtteranceRecord {
            id: id.to_string(),
            duration_s,
            reference: None,
            base_hyp: base.to_string(),
            external_hyps: match externals {
                Some([a, b, c]) => ExternalHyps {
                    sys_a: Some(a.to_string()),
                    sys_b: Some(b.to_string()),
                    sys_c: Some(c.to_string()),
                },
                None => ExternalHyps::default(),
            },
            keywords: Vec::new(),
            tags: Vec::new(),
        }
    }

    const LONG_SENT: &str =
        "the quick brown fox jumps over the lazy dog near the quiet river bank today at noon";

    #[test]
    fn mining_selects_consensus_divergence() {
        // 17 tokens; externals differ pairwise by at most... identical here,
        // base drops and mangles several words
        let records = vec![record(
            "hard-1",
            6.0,
            "the quick brown fox jumps over a lazy cat near a quiet river bank today at midnight",
            Some([LONG_SENT, LONG_SENT, LONG_SENT]),
        )];
        let out = mine_hardcases(&records, &CurationThresholds::default(), TokenMode::Word).unwrap();
        assert_eq!(out.selected, vec!["hard-1"]);
        assert!(out.skipped.is_empty());
    }

    #[test]
    fn mining_skips_disagreeing_externals() {
        let records = vec![record(
            "noisy-1",
            6.0,
            LONG_SENT,
            Some([
                LONG_SENT,
                "a completely different sentence about nothing in particular whatsoever",
                LONG_SENT,
            ]),
        )];
        let out = mine_hardcases(&records, &CurationThresholds::default(), TokenMode::Word).unwrap();
        assert!(out.selected.is_empty());
        assert_eq!(out.skipped.len(), 1);
        assert!(out.skipped[0].reason.contains("disagree"));
    }

    #[test]
    fn mining_skips_agreeing_base() {
        let records = vec![record("easy-1", 6.0, LONG_SENT, Some([LONG_SENT, LONG_SENT, LONG_SENT]))];
        let out = mine_hardcases(&records, &CurationThresholds::default(), TokenMode::Word).unwrap();
        assert!(out.selected.is_empty());
        assert!(out.skipped[0].reason.contains("close to consensus"));
    }

    #[test]
    fn mining_skips_incomplete_externals() {
        let mut r = record("partial-1", 6.0, LONG_SENT, Some([LONG_SENT, LONG_SENT, LONG_SENT]));
        r.external_hyps.sys_b = None;
        let out = mine_hardcases(&[r], &CurationThresholds::default(), TokenMode::Word).unwrap();
        assert_eq!(out.skipped[0].reason, "missing external hypotheses");
    }

    #[test]
    fn mining_thresholds_are_strict() {
        // 20-token externals, exactly one differing word between each pair
        // gives pairwise symmetric rate 1/20 = 0.05: NOT under 0.05
        let base20 = "w0 w1 w2 w3 w4 w5 w6 w7 w8 w9 w10 w11 w12 w13 w14 w15 w16 w17 w18 w19";
        let v1 = base20.replace("w19", "x19");
        let v2 = base20.replace("w18", "x18");
        let records =
            vec![record("edge-1", 6.0, "something else entirely", Some([base20, &v1, &v2]))];
        let out = mine_hardcases(&records, &CurationThresholds::default(), TokenMode::Word).unwrap();
        assert!(out.selected.is_empty(), "boundary agreement must not count as consensus");

        // divergence exactly at the bound must not select: with identical
        // externals the medoid is trivially the first, and the base differs
        // by 2 of 20 tokens = 0.10 exactly
        let mut toks: Vec<&str> = base20.split(' ').collect();
        toks[0] = "x0";
        toks[1] = "x1";
        let base_at_bound = toks.join(" ");
        let records =
            vec![record("edge-2", 6.0, &base_at_bound, Some([base20, base20, base20]))];
        let out = mine_hardcases(&records, &CurationThresholds::default(), TokenMode::Word).unwrap();
        assert!(out.selected.is_empty(), "divergence at the bound must not select");
    }

    #[test]
    fn long_audio_cutoff_is_strict() {
        let records = vec![
            record("short", 19.9, "a", None),
            record("edge", 20.0, "a", None),
            record("long", 20.1, "a", None),
        ];
        let ids = select_long_audio(&records, &CurationThresholds::default()).unwrap();
        assert_eq!(ids, vec!["long"]);
    }

    #[test]
    fn hallucination_classes_split_on_reference_support() {
        let cfg = RewardConfig::default();
        let mut spurious = record("sp-1", 5.0, "ok ok now now now now now now", None);
        spurious.reference = Some("ok ok now".to_string());
        let mut genuine = record("gen-1", 5.0, "no no no no no", None);
        genuine.reference = Some("no no no no no".to_string());
        let mut clean = record("cl-1", 5.0, "nothing repeated here", None);
        clean.reference = Some("nothing repeated here".to_string());
        let unreferenced = record("un-1", 5.0, "x x x x x x", None);

        let got = detect_hallucination_samples(
            &[spurious, genuine, clean, unreferenced],
            &cfg,
            TokenMode::Word,
        );
        assert_eq!(
            got,
            vec![
                HallucinationSample { id: "sp-1".into(), class: HallucinationClass::Spurious },
                HallucinationSample {
                    id: "gen-1".into(),
                    class: HallucinationClass::GenuineRepetition
                },
            ]
        );
    }

    #[test]
    fn frequency_extractor_prefers_rare_tokens() {
        let mk = |id: &str, text: &str| {
            let mut r = record(id, 3.0, text, None);
            r.reference = Some(text.to_string());
            r
        };
        let records = vec![
            mk("1", "play some music"),
            mk("2", "play some jazz"),
            mk("3", "play some rock"),
            mk("4", "call tchaikovsky"),
        ];
        let mut ex = FrequencyExtractor::from_records(&records, TokenMode::Word, 2);
        let kws = ex.extract("play some tchaikovsky").unwrap();
        // tchaikovsky appears in one document, play/some in four
        assert_eq!(kws, vec!["tchaikovsky", "play"]);
        // single-character tokens are never keywords
        let kws = ex.extract("a tchaikovsky").unwrap();
        assert_eq!(kws, vec!["tchaikovsky"]);
    }

    struct ScriptedTransport {
        replies: Vec<Result<serde_json::Value, CurationError>>,
    }

    impl KeywordTransport for ScriptedTransport {
        fn post(&mut self, _request: &serde_json::Value) -> Result<serde_json::Value, CurationError> {
            self.replies.remove(0)
        }
    }

    #[test]
    fn endpoint_extractor_parses_and_logs() {
        let transport = ScriptedTransport {
            replies: vec![Ok(serde_json::json!({"keywords": ["alpha", "beta"]}))],
        };
        let mut ex = EndpointExtractor::new(Box::new(transport));
        let kws = ex.extract("find alpha and beta").unwrap();
        assert_eq!(kws, vec!["alpha", "beta"]);
        assert_eq!(ex.replay_log().len(), 1);
        assert_eq!(ex.replay_log()[0].request["transcript"], "find alpha and beta");
    }

    #[test]
    fn endpoint_extractor_rejects_malformed_reply() {
        let transport =
            ScriptedTransport { replies: vec![Ok(serde_json::json!({"words": ["x"]}))] };
        let mut ex = EndpointExtractor::new(Box::new(transport));
        assert!(matches!(
            ex.extract("anything").unwrap_err(),
            CurationError::ExtractorFailure(_)
        ));
        assert!(ex.replay_log().is_empty(), "failed calls are not replayable");
    }

    #[test]
    fn replay_transport_round_trips() {
        let transport = ScriptedTransport {
            replies: vec![Ok(serde_json::json!({"keywords": ["gamma"]}))],
        };
        let mut live = EndpointExtractor::new(Box::new(transport));
        live.extract("gamma ray burst").unwrap();
        let log = live.take_replay_log();

        let mut offline = EndpointExtractor::new(Box::new(ReplayTransport::from_entries(&log)));
        assert_eq!(offline.extract("gamma ray burst").unwrap(), vec!["gamma"]);
        assert!(matches!(
            offline.extract("never seen").unwrap_err(),
            CurationError::ReplayMiss(_)
        ));
    }

    #[test]
    fn attach_keywords_passthrough_extract_and_fallback() {
        let mk = |id: &str, reference: Option<&str>, keywords: &[&str]| {
            let mut r = record(id, 3.0, "base", None);
            r.reference = reference.map(str::to_string);
            r.keywords = keywords.iter().map(|s| s.to_string()).collect();
            r
        };
        let mut records = vec![
            mk("kept", Some("already tagged"), &["tag"]),
            mk("fresh", Some("find the keyword here"), &[]),
            mk("bare", None, &[]),
        ];
        // primary fails once (on "fresh"), then the fallback serves it
        struct FailingExtractor;
        impl KeywordExtractor for FailingExtractor {
            fn extract(&mut self, _t: &str) -> Result<Vec<String>, CurationError> {
                Err(CurationError::ExtractorFailure("endpoint down".into()))
            }
        }
        let mut primary = FailingExtractor;
        let mut fallback = FrequencyExtractor::from_records(&records, TokenMode::Word, 3);
        let out =
            attach_keywords(&mut records, &mut primary, Some(&mut fallback)).unwrap();
        assert_eq!(out.passthrough, 1);
        assert_eq!(out.extracted, 1);
        assert_eq!(out.fallback_used, 1);
        assert_eq!(out.skipped_no_transcript, 1);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(records[0].keywords, vec!["tag"]);
        assert!(!records[1].keywords.is_empty());
        assert!(records[2].keywords.is_empty());

        // without a fallback the failure propagates
        let mut records = vec![mk("fresh", Some("text"), &[])];
        assert!(attach_keywords(&mut records, &mut FailingExtractor, None).is_err());
    }

    #[test]
    fn context_filter_requires_keyword_containment() {
        let pieces = vec![
            "schedule with doctor chen tomorrow".to_string(),
            "the weather is nice".to_string(),
            "chen said hello".to_string(),
        ];
        let kept = filter_contexts(&pieces, &["chen".to_string()], TokenMode::Word);
        assert_eq!(kept.len(), 2);
        assert!(filter_contexts(&pieces, &[], TokenMode::Word).is_empty());
    }

    fn context_corpus(n: usize) -> Vec<ContextSample> {
        (0..n)
            .map(|i| ContextSample {
                id: format!("s{i}"),
                pieces: vec![format!("piece from sample {i}")],
            })
            .collect()
    }

    #[test]
    fn mixing_draws_exactly_five_irrelevant() {
        let corpus = context_corpus(8);
        let relevant = vec!["my own context".to_string()];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mixed = mix_irrelevant_contexts("s0", &relevant, &corpus, &mut rng).unwrap();
        let irrelevant: Vec<_> = mixed.contexts.iter().filter(|c| !c.relevant).collect();
        let relevant_out: Vec<_> = mixed.contexts.iter().filter(|c| c.relevant).collect();
        assert_eq!(irrelevant.len(), 5);
        assert_eq!(relevant_out.len(), 1);
        for c in &irrelevant {
            assert_ne!(c.source_id, "s0", "own pieces are never irrelevant fillers");
        }
        // without replacement: all five distinct
        let mut texts: Vec<&str> = irrelevant.iter().map(|c| c.text.as_str()).collect();
        texts.sort_unstable();
        texts.dedup();
        assert_eq!(texts.len(), 5);
    }

    #[test]
    fn mixing_forced_choice_with_six_samples() {
        // five other samples, one piece each: the draw is forced
        let corpus = context_corpus(6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mixed = mix_irrelevant_contexts("s0", &[], &corpus, &mut rng).unwrap();
        let mut sources: Vec<&str> =
            mixed.contexts.iter().map(|c| c.source_id.as_str()).collect();
        sources.sort_unstable();
        assert_eq!(sources, vec!["s1", "s2", "s3", "s4", "s5"]);
    }

    #[test]
    fn mixing_rejects_small_corpus() {
        let corpus = context_corpus(5); // only 4 others
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = mix_irrelevant_contexts("s0", &[], &corpus, &mut rng).unwrap_err();
        assert_eq!(err, CurationError::CorpusTooSmall { needed: 5, got: 4 });
    }

    #[test]
    fn manifest_subsets_are_disjoint_and_accounted() {
        let mut records: Vec<UtteranceRecord> = (0..30)
            .map(|i| {
                let mut r = record(&format!("r{i:02}"), 5.0, "text", None);
                if i % 3 == 0 {
                    r.keywords = vec!["kw".to_string()];
                }
                r
            })
            .collect();
        records[0].duration_s = 25.0;
        records[1].duration_s = 25.0;
        let hardcase: Vec<String> = vec!["r00".into(), "r05".into(), "r07".into()];
        let long: Vec<String> = vec!["r00".into(), "r01".into()];
        let halluc = vec![
            HallucinationSample { id: "r02".into(), class: HallucinationClass::Spurious },
            HallucinationSample { id: "r05".into(), class: HallucinationClass::Spurious },
        ];
        let targets = SubsetTargets {
            hardcase: 3,
            long_audio: 2,
            hallucination: 2,
            keyword: 4,
            regular: 5,
        };
        let manifest = assemble_rl_manifest(&records, &hardcase, &long, &halluc, &targets, 11);

        // disjoint across subsets
        let mut seen: BTreeSet<&String> = BTreeSet::new();
        for sel in manifest.subsets.values() {
            for id in &sel.selected {
                assert!(seen.insert(id), "{id} appears in two subsets");
            }
        }
        // overlap handling: r00 went to hardcase, so long_audio only has r01
        let long_sel = &manifest.subsets["long_audio"];
        assert_eq!(long_sel.selected, vec!["r01"]);
        assert_eq!(long_sel.shortfall, 1);
        // r05 went to hardcase, so hallucination only has r02
        assert_eq!(manifest.subsets["hallucination"].selected, vec!["r02"]);
        // hardcase got everything it asked for
        assert_eq!(manifest.subsets["hardcase"].shortfall, 0);
        assert_eq!(manifest.subsets["keyword"].selected.len(), 4);
        assert_eq!(manifest.subsets["regular"].selected.len(), 5);
        assert_eq!(
            manifest.total_selected,
            manifest.subsets.values().map(|s| s.selected.len()).sum::<usize>()
        );
        assert!(!manifest.notes.is_empty());

        // regular never grabs predicate-selected records
        for id in &manifest.subsets["regular"].selected {
            assert!(!hardcase.contains(id));
            assert!(!long.contains(id));
        }
    }

    #[test]
    fn manifest_is_deterministic_per_seed() {
        let records: Vec<UtteranceRecord> =
            (0..20).map(|i| record(&format!("r{i:02}"), 5.0, "text", None)).collect();
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let targets =
            SubsetTargets { hardcase: 3, long_audio: 0, hallucination: 0, keyword: 0, regular: 4 };
        let a = assemble_rl_manifest(&records, &ids[..8], &[], &[], &targets, 9);
        let b = assemble_rl_manifest(&records, &ids[..8], &[], &[], &targets, 9);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = assemble_rl_manifest(&records, &ids[..8], &[], &[], &targets, 10);
        assert_ne!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&c).unwrap(),
            "different seeds should draw different subsets"
        );
    }
}
