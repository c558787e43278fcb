//! `asrl retrieve-hotwords`: hotword candidates for one hypothesis.

use std::path::PathBuf;

use asrl_core::hotword::{
    assemble_second_pass_input, retrieve, to_units, HotwordVocab, Lexicon, RetrievalConfig,
    UnitMode,
};
use asrl_core::textmetrics::TokenMode;
use clap::Args;
use serde::Serialize;

use crate::failure::{Classify, Failure};
use crate::manifest::{ensure_out_dir, ManifestBuilder};

#[derive(Debug, Args)]
pub struct HotwordArgs {
    /// Pronunciation lexicon: `surface<TAB>unit unit unit` per line.
    #[arg(long)]
    pub lexicon: PathBuf,
    /// Hotword list, one surface per line.
    #[arg(long)]
    pub hotwords: PathBuf,
    /// First-pass hypothesis text.
    #[arg(long)]
    pub hyp: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = UnitArg::Phoneme)]
    pub unit_mode: UnitArg,
    #[arg(long, default_value_t = 10)]
    pub max_candidates: usize,
    #[arg(long, default_value_t = 0.4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 1)]
    pub slack: usize,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum UnitArg {
    Phoneme,
    WordPiece,
}

impl From<UnitArg> for UnitMode {
    fn from(value: UnitArg) -> Self {
        match value {
            UnitArg::Phoneme => UnitMode::Phoneme,
            UnitArg::WordPiece => UnitMode::WordPiece,
        }
    }
}

#[derive(Serialize)]
struct CandidateReport<'a> {
    hyp: &'a str,
    hyp_units: &'a [String],
    candidates: &'a [asrl_core::hotword::HotwordCandidate],
}

pub fn run(args: HotwordArgs) -> Result<(), Failure> {
    let cfg = RetrievalConfig {
        max_candidates: args.max_candidates,
        norm_dist_threshold: args.threshold,
        window_slack: args.slack,
    };
    cfg.validate().or_usage()?;
    let mode: UnitMode = args.unit_mode.into();

    let mut manifest = ManifestBuilder::new(
        "retrieve-hotwords",
        None,
        serde_json::json!({ "retrieval": cfg, "unit_mode": mode, "hyp": args.hyp }),
    );
    manifest.input(&args.lexicon)?;
    manifest.input(&args.hotwords)?;

    let lexicon_text = std::fs::read_to_string(&args.lexicon)
        .runtime_context(format!("reading lexicon {}", args.lexicon.display()))?;
    let lexicon = Lexicon::parse_text(&lexicon_text).or_runtime()?;
    let hotword_text = std::fs::read_to_string(&args.hotwords)
        .runtime_context(format!("reading hotwords {}", args.hotwords.display()))?;
    let vocab = HotwordVocab::from_lines(&hotword_text, &lexicon, mode).or_runtime()?;

    let hyp_units = to_units(&args.hyp, &lexicon, mode);
    let candidates = retrieve(&hyp_units, &vocab, &cfg).or_runtime()?;
    let hyp_tokens = asrl_core::textmetrics::tokenize(&args.hyp, TokenMode::Mixed);
    let second_pass = assemble_second_pass_input(&hyp_tokens, &candidates);

    let report =
        CandidateReport { hyp: &args.hyp, hyp_units: &hyp_units, candidates: &candidates };
    let report_json = serde_json::to_string_pretty(&report).or_runtime()?;
    println!("{report_json}");

    ensure_out_dir(&args.out_dir)?;
    std::fs::write(args.out_dir.join("candidates.json"), report_json + "\n").or_runtime()?;
    std::fs::write(args.out_dir.join("second_pass.txt"), &second_pass).or_runtime()?;
    manifest.output(&args.out_dir, "candidates.json")?;
    manifest.output(&args.out_dir, "second_pass.txt")?;
    manifest.count("hotwords", vocab.len() as u64);
    manifest.count("candidates", candidates.len() as u64);
    manifest.write(&args.out_dir)?;
    Ok(())
}
