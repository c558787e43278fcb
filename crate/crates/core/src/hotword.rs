//! Hotword retrieval over pronunciation units.
//!
//! Hotwords and the first-pass hypothesis are both converted to unit
//! sequences (phonemes or word pieces) through a lexicon, with a per-
//! character fallback for out-of-vocabulary tokens. A hotword is a candidate
//! when some hypothesis window of similar length matches its units within a
//! normalized edit-distance threshold. Survivors are ranked and capped, then
//! pasted into the second-pass decoding context.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textmetrics::{edit_distance, tokenize, TokenMode, TokenSeq};

#[derive(Debug, Error, PartialEq)]
pub enum HotwordError {
    #[error("lexicon line {line}: {reason}")]
    BadLexiconLine { line: usize, reason: String },
    #[error("hotword list line {line}: duplicate surface {surface:?}")]
    DuplicateHotword { line: usize, surface: String },
    #[error("hotword {surface:?} produced no units")]
    EmptyUnits { surface: String },
    #[error("invalid retrieval config: {0}")]
    BadConfig(String),
}

/// Which unit alphabet the lexicon maps surfaces into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitMode {
    Phoneme,
    WordPiece,
}

/// Surface-to-units mapping, one entry per surface form.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn new() -> Self {
        Lexicon::default()
    }

    pub fn insert(&mut self, surface: &str, units: Vec<String>) {
        self.entries.insert(surface.to_string(), units);
    }

    pub fn lookup(&self, surface: &str) -> Option<&[String]> {
        self.entries.get(surface).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the tab-separated format: `surface<TAB>unit unit unit`.
    /// Blank lines and `#` comments are skipped; a surface without units or
    /// a line without a tab is an error with its line number.
    pub fn parse_text(text: &str) -> Result<Self, HotwordError> {
        let mut lex = Lexicon::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (surface, rest) = trimmed.split_once('\t').ok_or_else(|| {
                HotwordError::BadLexiconLine {
                    line,
                    reason: "expected `surface<TAB>units`".into(),
                }
            })?;
            let surface = surface.trim();
            if surface.is_empty() {
                return Err(HotwordError::BadLexiconLine { line, reason: "empty surface".into() });
            }
            let units: Vec<String> =
                rest.split_whitespace().map(str::to_string).collect();
            if units.is_empty() {
                return Err(HotwordError::BadLexiconLine {
                    line,
                    reason: format!("surface {surface:?} has no units"),
                });
            }
            lex.insert(surface, units);
        }
        Ok(lex)
    }
}

/// Converts text to pronunciation units: tokenize (mixed mode), look each
/// token up in the lexicon, and fall back to one unit per character for
/// out-of-vocabulary tokens. The fallback keeps retrieval usable for
/// surfaces the lexicon has never seen, at reduced precision.
pub fn to_units(text: &str, lexicon: &Lexicon, _mode: UnitMode) -> Vec<String> {
    let mut units = Vec::new();
    for token in tokenize(text, TokenMode::Mixed).tokens() {
        match lexicon.lookup(token) {
            Some(u) => units.extend(u.iter().cloned()),
            None => units.extend(token.chars().map(|c| c.to_string())),
        }
    }
    units
}

/// A hotword with its unit expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HotwordEntry {
    pub surface: String,
    pub units: Vec<String>,
}

/// The hotword inventory to retrieve from.
#[derive(Debug, Clone, Default)]
pub struct HotwordVocab {
    entries: Vec<HotwordEntry>,
}

impl HotwordVocab {
    /// Expands each surface through the lexicon. Duplicate surfaces are an
    /// error: hidden double entries would silently skew ranking.
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(
        surfaces: I,
        lexicon: &Lexicon,
        mode: UnitMode,
    ) -> Result<Self, HotwordError> {
        let mut entries: Vec<HotwordEntry> = Vec::new();
        for (idx, raw) in surfaces.into_iter().enumerate() {
            let surface = raw.trim();
            if surface.is_empty() {
                continue;
            }
            if entries.iter().any(|e| e.surface == surface) {
                return Err(HotwordError::DuplicateHotword {
                    line: idx + 1,
                    surface: surface.to_string(),
                });
            }
            let units = to_units(surface, lexicon, mode);
            if units.is_empty() {
                return Err(HotwordError::EmptyUnits { surface: surface.to_string() });
            }
            entries.push(HotwordEntry { surface: surface.to_string(), units });
        }
        Ok(HotwordVocab { entries })
    }

    /// Builds from a one-hotword-per-line listing.
    pub fn from_lines(text: &str, lexicon: &Lexicon, mode: UnitMode) -> Result<Self, HotwordError> {
        Self::build(text.lines(), lexicon, mode)
    }

    pub fn entries(&self) -> &[HotwordEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    /// Hard cap on returned candidates.
    pub max_candidates: usize,
    /// Admission threshold on distance / unit length.
    pub norm_dist_threshold: f64,
    /// Window widths scanned: hotword unit length +/- this slack.
    pub window_slack: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { max_candidates: 10, norm_dist_threshold: 0.4, window_slack: 1 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), HotwordError> {
        if self.max_candidates == 0 {
            return Err(HotwordError::BadConfig("max_candidates must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.norm_dist_threshold) {
            return Err(HotwordError::BadConfig(format!(
                "norm_dist_threshold must be in [0, 1], got {}",
                self.norm_dist_threshold
            )));
        }
        Ok(())
    }
}

/// One admitted hotword with its best-matching hypothesis window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotwordCandidate {
    pub surface: String,
    /// Length of the hotword's unit expansion.
    pub unit_len: usize,
    /// Edit distance of the best window.
    pub distance: usize,
    /// Distance normalized by the hotword's unit length.
    pub normalized_distance: f64,
    /// Best window as [start, end) unit indices into the hypothesis.
    pub span_start: usize,
    pub span_end: usize,
}

/// Scans hypothesis windows of width unit_len +/- slack for each hotword and
/// admits those whose best window sits within the normalized threshold.
/// Ranking: normalized distance ascending, then unit length descending
/// (longer matches are more specific), then surface, then capped.
/// An empty hypothesis yields no candidates.
pub fn retrieve(
    hyp_units: &[String],
    vocab: &HotwordVocab,
    cfg: &RetrievalConfig,
) -> Result<Vec<HotwordCandidate>, HotwordError> {
    cfg.validate()?;
    let mut candidates: Vec<HotwordCandidate> = Vec::new();
    for entry in vocab.entries() {
        let unit_len = entry.units.len();
        let lo = unit_len.saturating_sub(cfg.window_slack).max(1);
        let hi = unit_len + cfg.window_slack;
        // best (distance, start, width), lexicographic
        let mut best: Option<(usize, usize, usize)> = None;
        for width in lo..=hi {
            if width > hyp_units.len() {
                continue;
            }
            for start in 0..=hyp_units.len() - width {
                let d = edit_distance(&entry.units, &hyp_units[start..start + width]);
                let key = (d, start, width);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            }
        }
        let Some((distance, start, width)) = best else { continue };
        let normalized = distance as f64 / unit_len.max(1) as f64;
        if normalized <= cfg.norm_dist_threshold {
            candidates.push(HotwordCandidate {
                surface: entry.surface.clone(),
                unit_len,
                distance,
                normalized_distance: normalized,
                span_start: start,
                span_end: start + width,
            });
        }
    }
    candidates.sort_by(|a, b| {
        a.normalized_distance
            .total_cmp(&b.normalized_distance)
            .then(b.unit_len.cmp(&a.unit_len))
            .then(a.surface.cmp(&b.surface))
    });
    candidates.truncate(cfg.max_candidates);
    Ok(candidates)
}

/// Second-pass decoding input: first-pass hypothesis plus the retrieved
/// hotword surfaces as a contextual hint block.
pub fn assemble_second_pass_input(
    first_pass: &TokenSeq,
    candidates: &[HotwordCandidate],
) -> String {
    let mut out = String::new();
    out.push_str("hypothesis: ");
    out.push_str(&first_pass.joined());
    out.push('\n');
    out.push_str("hotwords:");
    if candidates.is_empty() {
        out.push_str(" (none)");
    } else {
        for c in candidates {
            out.push(' ');
            out.push_str(&c.surface);
        }
    }
    out.push('\n');
    out
}
