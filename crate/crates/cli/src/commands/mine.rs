//! `asrl mine`: curation over transcription records, from hard-case mining
//! to the assembled RL training manifest.

use std::path::PathBuf;

use asrl_core::curation::{
    assemble_rl_manifest, attach_keywords, detect_hallucination_samples, mine_hardcases,
    select_long_audio, CurationThresholds, EndpointExtractor, FrequencyExtractor,
    KeywordExtractor, ReplayEntry, ReplayTransport, SubsetTargets, UtteranceRecord,
};
use asrl_core::jsonl::{read_jsonl, write_jsonl};
use asrl_core::rewards::RewardConfig;
use asrl_core::textmetrics::TokenMode;
use clap::Args;
use serde::Serialize;

use crate::failure::{usage_msg, Classify, Failure};
use crate::http::UreqTransport;
use crate::manifest::{ensure_out_dir, ManifestBuilder};

#[derive(Debug, Args)]
pub struct MineArgs {
    /// Transcription records (JSONL).
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TokenArg::Word)]
    pub token_mode: TokenArg,
    #[arg(long, default_value_t = 0.05)]
    pub consensus_wer: f64,
    #[arg(long, default_value_t = 0.10)]
    pub divergence_wer: f64,
    #[arg(long, default_value_t = 20.0)]
    pub long_audio_s: f64,
    #[arg(long, default_value_t = 5)]
    pub top_k_keywords: usize,
    /// Fill missing keywords from reference transcripts before assembling.
    #[arg(long, default_value_t = false)]
    pub attach_keywords: bool,
    /// Keyword endpoint URL; exchanges are recorded to replay_log.jsonl.
    #[arg(long)]
    pub keyword_endpoint: Option<String>,
    /// Replay log from a previous run, used instead of a live endpoint.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    pub target_hardcase: usize,
    #[arg(long, default_value_t = 20_000)]
    pub target_long: usize,
    #[arg(long, default_value_t = 20_000)]
    pub target_hallucination: usize,
    #[arg(long, default_value_t = 20_000)]
    pub target_keyword: usize,
    #[arg(long, default_value_t = 20_000)]
    pub target_regular: usize,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum TokenArg {
    Word,
    Char,
    Mixed,
}

impl From<TokenArg> for TokenMode {
    fn from(value: TokenArg) -> Self {
        match value {
            TokenArg::Word => TokenMode::Word,
            TokenArg::Char => TokenMode::Char,
            TokenArg::Mixed => TokenMode::Mixed,
        }
    }
}

#[derive(Serialize)]
struct MiningReport<'a> {
    hardcases: &'a asrl_core::curation::MiningOutcome,
    long_audio: &'a [String],
    hallucination: &'a [asrl_core::curation::HallucinationSample],
    keyword_attachment: Option<&'a asrl_core::curation::AttachOutcome>,
}

pub fn run(args: MineArgs) -> Result<(), Failure> {
    let thresholds = CurationThresholds {
        consensus_wer: args.consensus_wer,
        divergence_wer: args.divergence_wer,
        long_audio_s: args.long_audio_s,
        top_k_keywords: args.top_k_keywords,
    };
    thresholds.validate().or_usage()?;
    if args.keyword_endpoint.is_some() && args.replay.is_some() {
        return Err(usage_msg("--keyword-endpoint and --replay are mutually exclusive"));
    }
    let targets = SubsetTargets {
        hardcase: args.target_hardcase,
        long_audio: args.target_long,
        hallucination: args.target_hallucination,
        keyword: args.target_keyword,
        regular: args.target_regular,
    };
    let mode: TokenMode = args.token_mode.into();

    let mut manifest = ManifestBuilder::new(
        "mine",
        Some(args.seed),
        serde_json::json!({
            "thresholds": thresholds,
            "targets": targets,
            "token_mode": mode,
            "attach_keywords": args.attach_keywords,
            "keyword_endpoint": args.keyword_endpoint,
        }),
    );
    manifest.input(&args.records)?;

    let mut records: Vec<UtteranceRecord> = read_jsonl(&args.records).or_runtime()?;
    manifest.count("records", records.len() as u64);
    ensure_out_dir(&args.out_dir)?;

    let mut attach_outcome = None;
    if args.attach_keywords {
        let mut fallback = FrequencyExtractor::from_records(&records, mode, args.top_k_keywords);
        let outcome = match (&args.keyword_endpoint, &args.replay) {
            (Some(url), None) => {
                let mut primary =
                    EndpointExtractor::new(Box::new(UreqTransport::new(url)));
                let outcome =
                    attach_keywords(&mut records, &mut primary, Some(&mut fallback))
                        .or_runtime()?;
                write_jsonl(&args.out_dir.join("replay_log.jsonl"), primary.replay_log())
                    .or_runtime()?;
                manifest.output(&args.out_dir, "replay_log.jsonl")?;
                outcome
            }
            (None, Some(replay_path)) => {
                manifest.input(replay_path)?;
                let entries: Vec<ReplayEntry> = read_jsonl(replay_path).or_runtime()?;
                let mut primary =
                    EndpointExtractor::new(Box::new(ReplayTransport::from_entries(&entries)));
                attach_keywords(&mut records, &mut primary, Some(&mut fallback)).or_runtime()?
            }
            (None, None) => {
                let primary: &mut dyn KeywordExtractor = &mut fallback;
                attach_keywords(&mut records, primary, None).or_runtime()?
            }
            (Some(_), Some(_)) => unreachable!("rejected above"),
        };
        for warning in &outcome.warnings {
            manifest.note(format!("keyword attachment: {warning}"));
        }
        manifest.count("keywords_extracted", outcome.extracted as u64);
        manifest.count("keywords_passthrough", outcome.passthrough as u64);
        manifest.count("keywords_fallback", outcome.fallback_used as u64);
        manifest.count("keywords_skipped_no_transcript", outcome.skipped_no_transcript as u64);
        write_jsonl(&args.out_dir.join("records_with_keywords.jsonl"), &records)
            .or_runtime()?;
        manifest.output(&args.out_dir, "records_with_keywords.jsonl")?;
        attach_outcome = Some(outcome);
    }

    let hardcases = mine_hardcases(&records, &thresholds, mode).or_usage()?;
    let long_audio = select_long_audio(&records, &thresholds).or_usage()?;
    let hallucination =
        detect_hallucination_samples(&records, &RewardConfig::default(), mode);
    let rl_manifest = assemble_rl_manifest(
        &records,
        &hardcases.selected,
        &long_audio,
        &hallucination,
        &targets,
        args.seed,
    );

    let report = MiningReport {
        hardcases: &hardcases,
        long_audio: &long_audio,
        hallucination: &hallucination,
        keyword_attachment: attach_outcome.as_ref(),
    };
    std::fs::write(
        args.out_dir.join("mining_report.json"),
        serde_json::to_string_pretty(&report).or_runtime()? + "\n",
    )
    .or_runtime()?;
    std::fs::write(
        args.out_dir.join("rl_manifest.json"),
        serde_json::to_string_pretty(&rl_manifest).or_runtime()? + "\n",
    )
    .or_runtime()?;

    manifest.output(&args.out_dir, "mining_report.json")?;
    manifest.output(&args.out_dir, "rl_manifest.json")?;
    manifest.count("hardcase_selected", hardcases.selected.len() as u64);
    manifest.count("hardcase_skipped", hardcases.skipped.len() as u64);
    manifest.count("long_audio", long_audio.len() as u64);
    manifest.count("hallucination", hallucination.len() as u64);
    manifest.count("manifest_total", rl_manifest.total_selected as u64);
    manifest.write(&args.out_dir)?;

    println!(
        "mined {} hardcases, {} long, {} hallucination; manifest selects {} of {} records",
        hardcases.selected.len(),
        long_audio.len(),
        hallucination.len(),
        rl_manifest.total_selected,
        records.len()
    );
    Ok(())
}
