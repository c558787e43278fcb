//! `asrl eval`: greedy-decode a checkpoint and report corpus metrics.

use std::path::PathBuf;

use asrl_core::rewards::RewardConfig;
use asrl_core::toytask::ToyVocab;
use asrl_core::trainer::evaluate;
use clap::Args;

use crate::failure::{runtime_msg, Classify, Failure};
use crate::manifest::{ensure_out_dir, ManifestBuilder};
use crate::records::{load_dataset, load_policy};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluation dataset (JSONL rows from synth-data).
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint written by train-grpo.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub max_response_len: usize,
    #[arg(long)]
    pub hallucination_gamma: Option<f64>,
    #[arg(long)]
    pub keyword_weight: Option<f64>,
    #[arg(long)]
    pub language_gate: Option<bool>,
}

pub fn run(args: EvalArgs) -> Result<(), Failure> {
    let mut reward = RewardConfig::default();
    if let Some(v) = args.hallucination_gamma {
        reward.hallucination_gamma = v;
    }
    if let Some(v) = args.keyword_weight {
        reward.keyword_weight = v;
    }
    if let Some(v) = args.language_gate {
        reward.enforce_language_match = v;
    }
    reward.validate().or_usage()?;

    let mut manifest = ManifestBuilder::new(
        "eval",
        None,
        serde_json::json!({
            "reward": reward,
            "max_response_len": args.max_response_len,
        }),
    );
    manifest.input(&args.data)?;
    manifest.input(&args.policy)?;

    let policy = load_policy(&args.policy)?;
    let vocab = ToyVocab::bilingual(policy.v_tok()).or_runtime()?;
    let records = load_dataset(&args.data, &vocab)?;
    if records.is_empty() {
        return Err(runtime_msg(format!("eval set {} is empty", args.data.display())));
    }

    let report = evaluate(&policy, &records, &vocab, &reward, args.max_response_len);

    ensure_out_dir(&args.out_dir)?;
    std::fs::write(
        args.out_dir.join("eval_report.json"),
        serde_json::to_string_pretty(&report).or_runtime()? + "\n",
    )
    .or_runtime()?;
    manifest.output(&args.out_dir, "eval_report.json")?;
    manifest.count("utterances", report.utterances as u64);
    manifest.write(&args.out_dir)?;

    println!("utterances         {}", report.utterances);
    println!("corpus WER         {:.4}", report.corpus_wer);
    println!("mean reward        {:.4}", report.mean_reward);
    println!(
        "keyword prec/rec   {:.4} / {:.4}",
        report.keyword_precision, report.keyword_recall
    );
    println!("hallucination rate {:.4}", report.hallucination_rate);
    println!("language mismatch  {:.4}", report.language_mismatch_rate);
    Ok(())
}
