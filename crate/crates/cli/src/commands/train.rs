//! `asrl train-grpo`: run the group-relative training loop over a dataset.

use std::path::PathBuf;

use asrl_core::jsonl::to_jsonl_string;
use asrl_core::toytask::ToyVocab;
use asrl_core::trainer::{train, StopReason, TrainerConfig};
use clap::Args;

use crate::failure::{Classify, Failure};
use crate::manifest::{canonical_log_digest, ensure_out_dir, ManifestBuilder};
use crate::records::{load_dataset, PolicyFile};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset (JSONL rows from synth-data).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON file with the full trainer configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Content vocabulary size the dataset was generated with.
    #[arg(long, default_value_t = 12)]
    pub v_tok: u32,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub groups_per_step: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub clip_eps: Option<f64>,
    #[arg(long)]
    pub kl_beta: Option<f64>,
    #[arg(long)]
    pub max_response_len: Option<usize>,
    /// Stop the run once this much wall time has elapsed.
    #[arg(long)]
    pub max_wall_ms: Option<u64>,
    /// Repetition-penalty strength (0 disables the penalty).
    #[arg(long)]
    pub hallucination_gamma: Option<f64>,
    /// Weight of the keyword recall/precision term (0 disables it).
    #[arg(long)]
    pub keyword_weight: Option<f64>,
    /// Pin the reward to -1 when the output script disagrees with the
    /// reference script.
    #[arg(long)]
    pub language_gate: Option<bool>,
}

pub fn effective_config(args: &TrainArgs) -> Result<TrainerConfig, Failure> {
    let mut cfg: TrainerConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .usage_context(format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .usage_context(format!("parsing config {}", path.display()))?
        }
        None => TrainerConfig::default(),
    };
    if let Some(v) = args.steps {
        cfg.grpo.steps = v;
    }
    if let Some(v) = args.seed {
        cfg.grpo.seed = v;
    }
    if let Some(v) = args.group_size {
        cfg.grpo.group_size = v;
    }
    if let Some(v) = args.groups_per_step {
        cfg.grpo.groups_per_step = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.grpo.learning_rate = v;
    }
    if let Some(v) = args.clip_eps {
        cfg.grpo.clip_eps = v;
    }
    if let Some(v) = args.kl_beta {
        cfg.grpo.kl_beta = v;
    }
    if let Some(v) = args.max_response_len {
        cfg.grpo.max_response_len = v;
    }
    if let Some(v) = args.max_wall_ms {
        cfg.max_wall_ms = Some(v);
    }
    if let Some(v) = args.hallucination_gamma {
        cfg.reward.hallucination_gamma = v;
    }
    if let Some(v) = args.keyword_weight {
        cfg.reward.keyword_weight = v;
    }
    if let Some(v) = args.language_gate {
        cfg.reward.enforce_language_match = v;
    }
    cfg.validate().or_usage()?;
    Ok(cfg)
}

pub fn run(args: TrainArgs) -> Result<(), Failure> {
    let cfg = effective_config(&args)?;
    let vocab = ToyVocab::bilingual(args.v_tok).or_usage()?;

    let mut manifest = ManifestBuilder::new(
        "train-grpo",
        Some(cfg.grpo.seed),
        serde_json::json!({ "trainer": cfg, "v_tok": args.v_tok }),
    );
    manifest.input(&args.data)?;

    let records = load_dataset(&args.data, &vocab)?;
    let outcome = train(&records, &vocab, &cfg).or_runtime()?;

    ensure_out_dir(&args.out_dir)?;
    let log_text = to_jsonl_string(&outcome.reports).or_runtime()?;
    std::fs::write(args.out_dir.join("train_log.jsonl"), &log_text).or_runtime()?;
    let checkpoint = PolicyFile::from_policy(&outcome.policy);
    std::fs::write(
        args.out_dir.join("policy.json"),
        serde_json::to_string_pretty(&checkpoint).or_runtime()? + "\n",
    )
    .or_runtime()?;

    manifest.output_canonical(
        "train_log.jsonl",
        canonical_log_digest(&log_text)?,
        "wall_ms zeroed per line",
    );
    manifest.output(&args.out_dir, "policy.json")?;
    manifest.count("records", records.len() as u64);
    manifest.count("steps_completed", outcome.reports.len() as u64);
    match &outcome.stopped_early {
        Some(StopReason::WallClockBudget) => manifest.note("stopped early: wall-clock budget"),
        Some(StopReason::NumericalAbort) => {
            manifest.note("stopped early: non-finite gradient; checkpoint is last good step")
        }
        None => {}
    }
    manifest.write(&args.out_dir)?;

    let last = outcome.reports.last();
    println!(
        "trained {} steps; final mean reward {}",
        outcome.reports.len(),
        last.map_or("n/a".to_string(), |r| format!("{:.4}", r.mean_reward)),
    );
    Ok(())
}
