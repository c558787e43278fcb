//! `asrl synth-data`: synthesize a toy dataset and its train/eval splits.

use std::path::PathBuf;

use asrl_core::jsonl::write_jsonl;
use asrl_core::toytask::{synth_dataset, ChannelConfig, ToyVocab};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::failure::{usage_msg, Classify, Failure};
use crate::manifest::{ensure_out_dir, ManifestBuilder};
use crate::records::DatasetRow;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory receiving dataset.jsonl, train.jsonl, eval.jsonl, meta.json.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Number of utterances to generate.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Content vocabulary size (split between Latin syllables and CJK).
    #[arg(long, default_value_t = 12)]
    pub v_tok: u32,
    /// Per-token probability of corrupting an observation symbol.
    #[arg(long, default_value_t = 0.1)]
    pub sub_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ins_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    pub del_rate: f64,
    /// Probability an utterance is pure noise with an empty target.
    #[arg(long, default_value_t = 0.0)]
    pub pure_noise_rate: f64,
    #[arg(long, default_value_t = 0.3)]
    pub keyword_rate: f64,
    #[arg(long, default_value_t = 4)]
    pub len_min: usize,
    #[arg(long, default_value_t = 10)]
    pub len_max: usize,
    /// Fraction of rows held out into eval.jsonl.
    #[arg(long, default_value_t = 0.2)]
    pub eval_fraction: f64,
}

#[derive(Serialize)]
struct Meta<'a> {
    channel: &'a ChannelConfig,
    n: usize,
    seed: u64,
    eval_fraction: f64,
    train_rows: usize,
    eval_rows: usize,
}

pub fn run(args: SynthArgs) -> Result<(), Failure> {
    let channel = ChannelConfig {
        v_tok: args.v_tok,
        sub_rate: args.sub_rate,
        ins_rate: args.ins_rate,
        del_rate: args.del_rate,
        target_len_min: args.len_min,
        target_len_max: args.len_max,
        pure_noise_rate: args.pure_noise_rate,
        keyword_rate: args.keyword_rate,
    };
    channel.validate().or_usage()?;
    if !(0.0..=1.0).contains(&args.eval_fraction) {
        return Err(usage_msg(format!(
            "--eval-fraction must be in [0,1], got {}",
            args.eval_fraction
        )));
    }
    let vocab = ToyVocab::bilingual(args.v_tok).or_usage()?;

    let mut manifest = ManifestBuilder::new(
        "synth-data",
        Some(args.seed),
        serde_json::json!({
            "channel": channel,
            "n": args.n,
            "eval_fraction": args.eval_fraction,
        }),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let utterances = synth_dataset(&channel, &vocab, args.n, &mut rng).or_usage()?;
    let rows: Vec<DatasetRow> = utterances
        .into_iter()
        .enumerate()
        .map(|(i, utt)| DatasetRow { id: format!("utt-{i:06}"), utt })
        .collect();

    // seeded split: draw eval indices without replacement, keep corpus order
    let n_eval = (args.n as f64 * args.eval_fraction).round() as usize;
    let mut indices: Vec<usize> = (0..rows.len()).collect();
    for i in 0..n_eval {
        use rand::Rng;
        let j = rng.random_range(i..indices.len());
        indices.swap(i, j);
    }
    let mut eval_idx = indices[..n_eval].to_vec();
    eval_idx.sort_unstable();
    let mut train_rows = Vec::with_capacity(rows.len() - n_eval);
    let mut eval_rows = Vec::with_capacity(n_eval);
    let mut eval_iter = eval_idx.iter().peekable();
    for (i, row) in rows.iter().enumerate() {
        if eval_iter.peek() == Some(&&i) {
            eval_iter.next();
            eval_rows.push(row.clone());
        } else {
            train_rows.push(row.clone());
        }
    }

    ensure_out_dir(&args.out_dir)?;
    write_jsonl(&args.out_dir.join("dataset.jsonl"), &rows).or_runtime()?;
    write_jsonl(&args.out_dir.join("train.jsonl"), &train_rows).or_runtime()?;
    write_jsonl(&args.out_dir.join("eval.jsonl"), &eval_rows).or_runtime()?;
    let meta = Meta {
        channel: &channel,
        n: args.n,
        seed: args.seed,
        eval_fraction: args.eval_fraction,
        train_rows: train_rows.len(),
        eval_rows: eval_rows.len(),
    };
    std::fs::write(
        args.out_dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).or_runtime()? + "\n",
    )
    .or_runtime()?;

    for name in ["dataset.jsonl", "train.jsonl", "eval.jsonl", "meta.json"] {
        manifest.output(&args.out_dir, name)?;
    }
    manifest.count("total_rows", rows.len() as u64);
    manifest.count("train_rows", train_rows.len() as u64);
    manifest.count("eval_rows", eval_rows.len() as u64);
    manifest.write(&args.out_dir)?;

    println!(
        "wrote {} rows ({} train / {} eval) to {}",
        rows.len(),
        train_rows.len(),
        eval_rows.len(),
        args.out_dir.display()
    );
    Ok(())
}
