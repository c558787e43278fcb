//! `asrl build-contextual`: per-record context mixing for contextual
//! fine-tuning rows.

use std::collections::HashMap;
use std::path::PathBuf;

use asrl_core::curation::{
    filter_contexts, mix_irrelevant_contexts, ContextSample, MixedContexts, UtteranceRecord,
};
use asrl_core::jsonl::{read_jsonl, write_jsonl};
use asrl_core::textmetrics::TokenMode;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::commands::mine::TokenArg;
use crate::failure::{Classify, Failure};
use crate::manifest::{ensure_out_dir, ManifestBuilder};

#[derive(Debug, Args)]
pub struct ContextualArgs {
    /// Transcription records carrying keywords (JSONL).
    #[arg(long)]
    pub records: PathBuf,
    /// Candidate context pieces per record id (JSONL).
    #[arg(long)]
    pub contexts: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TokenArg::Word)]
    pub token_mode: TokenArg,
}

pub fn run(args: ContextualArgs) -> Result<(), Failure> {
    let mode: TokenMode = args.token_mode.into();
    let mut manifest = ManifestBuilder::new(
        "build-contextual",
        Some(args.seed),
        serde_json::json!({ "token_mode": mode }),
    );
    manifest.input(&args.records)?;
    manifest.input(&args.contexts)?;

    let records: Vec<UtteranceRecord> = read_jsonl(&args.records).or_runtime()?;
    let samples: Vec<ContextSample> = read_jsonl(&args.contexts).or_runtime()?;
    let by_id: HashMap<&str, &UtteranceRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut rows: Vec<MixedContexts> = Vec::new();
    let mut skipped_no_record = 0u64;
    for sample in &samples {
        let Some(record) = by_id.get(sample.id.as_str()) else {
            skipped_no_record += 1;
            manifest.note(format!("{}: no matching record, skipped", sample.id));
            continue;
        };
        let relevant = filter_contexts(&sample.pieces, &record.keywords, mode);
        let mixed = mix_irrelevant_contexts(&sample.id, &relevant, &samples, &mut rng)
            .or_runtime()?;
        rows.push(mixed);
    }

    ensure_out_dir(&args.out_dir)?;
    write_jsonl(&args.out_dir.join("contextual.jsonl"), &rows).or_runtime()?;
    manifest.output(&args.out_dir, "contextual.jsonl")?;
    manifest.count("records", records.len() as u64);
    manifest.count("context_samples", samples.len() as u64);
    manifest.count("rows_written", rows.len() as u64);
    manifest.count("skipped_no_record", skipped_no_record);
    manifest.write(&args.out_dir)?;

    println!("wrote {} contextual rows ({} skipped)", rows.len(), skipped_no_record);
    Ok(())
}
