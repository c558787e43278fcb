//! Training loop for the toy transcription task.
//!
//! Glue between the synthetic dataset, the composite reward, and the GRPO
//! optimizer: samples a group of responses per prompt from the current
//! policy (so sampling-time logprobs are the "old" logprobs), scores each
//! response with the sequence-level reward, and steps the policy. The KL
//! reference is the frozen initial policy.

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grpo::{self, GrpoConfig, GrpoError, Policy, RolloutGroup, StepReport};
use crate::rewards::{self, RewardConfig, RewardError};
use crate::textmetrics::{self, TokenSeq};
use crate::toytask::{content_tokens, ObsSequence, ToyPolicy, ToyTaskError, ToyUtterance, ToyVocab};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Task(#[from] ToyTaskError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("training set is empty")]
    EmptyDataset,
}

/// One utterance prepared for training: tokenized target plus validated
/// observations.
#[derive(Debug, Clone)]
pub struct TrainRecord {
    pub id: String,
    pub target: TokenSeq,
    pub obs: ObsSequence,
    pub keywords: Vec<TokenSeq>,
}

impl TrainRecord {
    pub fn from_utterance(
        id: String,
        utt: &ToyUtterance,
        vocab: &ToyVocab,
    ) -> Result<Self, ToyTaskError> {
        let obs = ObsSequence::new(utt.obs_symbols.clone(), vocab.v_tok() + 1)?;
        for &tok in utt.target_ids.iter().chain(&utt.keyword_ids) {
            if tok >= vocab.v_tok() {
                return Err(ToyTaskError::TokenOutOfRange { tok, eos: vocab.v_tok() });
            }
        }
        let keywords = utt.keyword_ids.iter().map(|&k| vocab.token_seq(&[k])).collect();
        Ok(TrainRecord { id, target: vocab.token_seq(&utt.target_ids), obs, keywords })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub grpo: GrpoConfig,
    pub reward: RewardConfig,
    /// Wall-clock budget for the whole run; checked between steps.
    pub max_wall_ms: Option<u64>,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.grpo.validate()?;
        self.reward.validate()?;
        Ok(())
    }
}

/// Samples one rollout group for `record` from `policy` and scores it.
/// On-policy by construction: the stored old logprobs are the sampling-time
/// logprobs of the very policy being optimized.
pub fn collect_group<R: RngCore>(
    policy: &ToyPolicy,
    ref_policy: &ToyPolicy,
    record: &TrainRecord,
    grpo_cfg: &GrpoConfig,
    reward_cfg: &RewardConfig,
    vocab: &ToyVocab,
    rng: &mut R,
) -> Result<RolloutGroup, TrainError> {
    let mut group = RolloutGroup::new(record.obs.symbols().to_vec());
    for _ in 0..grpo_cfg.group_size {
        let sampled = policy.sample_response(&record.obs, rng, grpo_cfg.max_response_len);
        let ref_lp = ref_policy
            .token_logprobs(record.obs.symbols(), &sampled.tokens)
            .map_err(TrainError::Task)?;
        let hyp_ids = content_tokens(&sampled.tokens, policy.eos_id());
        let hyp = vocab.token_seq(hyp_ids);
        let breakdown = rewards::compose(&record.target, &hyp, &record.keywords, reward_cfg);
        group.responses.push(sampled.tokens);
        group.old_logprobs.push(sampled.logprobs);
        group.ref_logprobs.push(ref_lp);
        group.rewards.push(breakdown.total);
    }
    Ok(group)
}

/// Why a run ended before completing all configured steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    WallClockBudget,
    /// A non-finite gradient appeared; the update was discarded and the
    /// policy from the last completed step is returned as the checkpoint.
    NumericalAbort,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub reports: Vec<StepReport>,
    pub policy: ToyPolicy,
    pub stopped_early: Option<StopReason>,
}

/// Runs the full GRPO loop over `records`, cycling through them in order,
/// one fresh zero-initialized policy per call. Deterministic for a fixed
/// seed. A non-finite gradient stops the run before the poisoned update is
/// applied, keeping the last good policy as the checkpoint.
pub fn train(
    records: &[TrainRecord],
    vocab: &ToyVocab,
    cfg: &TrainerConfig,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut policy = ToyPolicy::new(vocab.v_tok());
    let ref_policy = policy.snapshot();
    let mut master = ChaCha8Rng::seed_from_u64(cfg.grpo.seed);
    let start = Instant::now();
    let mut reports = Vec::with_capacity(cfg.grpo.steps);
    let mut stopped_early = None;

    for step in 0..cfg.grpo.steps {
        if let Some(budget) = cfg.max_wall_ms {
            if start.elapsed().as_millis() as u64 >= budget {
                stopped_early = Some(StopReason::WallClockBudget);
                break;
            }
        }
        let step_start = Instant::now();
        let mut groups = Vec::with_capacity(cfg.grpo.groups_per_step);
        for j in 0..cfg.grpo.groups_per_step {
            let record = &records[(step * cfg.grpo.groups_per_step + j) % records.len()];
            // each group gets its own stream so collection order is immaterial
            let mut group_rng = ChaCha8Rng::seed_from_u64(master.next_u64());
            groups.push(collect_group(
                &policy,
                &ref_policy,
                record,
                &cfg.grpo,
                &cfg.reward,
                vocab,
                &mut group_rng,
            )?);
        }
        let mut report = match grpo::train_step(&mut groups, &mut policy, &cfg.grpo) {
            Ok(report) => report,
            Err(GrpoError::NonFiniteGradient) => {
                stopped_early = Some(StopReason::NumericalAbort);
                break;
            }
            Err(err) => return Err(err.into()),
        };
        report.step = step as u64;
        report.wall_ms = step_start.elapsed().as_millis() as u64;
        reports.push(report);
    }

    Ok(TrainOutcome { reports, policy, stopped_early })
}

/// Corpus-level greedy-decoding metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub utterances: usize,
    /// Micro-averaged: total edits over total reference tokens.
    pub corpus_wer: f64,
    pub mean_reward: f64,
    pub keyword_precision: f64,
    pub keyword_recall: f64,
    /// Fraction of utterances where the repetition detector fires.
    pub hallucination_rate: f64,
    /// Fraction of utterances whose dominant script disagrees with the
    /// reference.
    pub language_mismatch_rate: f64,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub wer: f64,
    pub reward: f64,
}

/// Greedy-decodes every record and aggregates error metrics.
pub fn evaluate(
    policy: &ToyPolicy,
    records: &[TrainRecord],
    vocab: &ToyVocab,
    reward_cfg: &RewardConfig,
    max_len: usize,
) -> EvalReport {
    let mut edits = 0usize;
    let mut ref_tokens = 0usize;
    let mut occ_ref = 0usize;
    let mut occ_hyp = 0usize;
    let mut matched = 0usize;
    let mut halluc = 0usize;
    let mut mismatch = 0usize;
    let mut reward_sum = 0.0;
    let mut rows = Vec::with_capacity(records.len());

    for record in records {
        let hyp_ids = policy.greedy_decode(&record.obs, max_len);
        let hyp = vocab.token_seq(&hyp_ids);
        let alignment = textmetrics::align(&record.target, &hyp);
        edits += alignment.edits();
        ref_tokens += alignment.ref_len;
        if !record.keywords.is_empty() {
            let s = textmetrics::keyword_stats(&record.target, &hyp, &record.keywords);
            occ_ref += s.keyword_occurrences_ref;
            occ_hyp += s.keyword_occurrences_hyp;
            matched += s.matched;
        }
        if rewards::hallucinated_token_count(&record.target, &hyp, reward_cfg) > 0 {
            halluc += 1;
        }
        if !rewards::language_match(&record.target, &hyp) {
            mismatch += 1;
        }
        let breakdown = rewards::compose(&record.target, &hyp, &record.keywords, reward_cfg);
        reward_sum += breakdown.total;
        rows.push(EvalRow {
            id: record.id.clone(),
            reference: record.target.joined(),
            hypothesis: hyp.joined(),
            wer: textmetrics::wer(&record.target, &hyp),
            reward: breakdown.total,
        });
    }

    let n = records.len().max(1) as f64;
    EvalReport {
        utterances: records.len(),
        corpus_wer: edits as f64 / ref_tokens.max(1) as f64,
        mean_reward: reward_sum / n,
        keyword_precision: matched as f64 / occ_hyp.max(1) as f64,
        keyword_recall: if occ_ref == 0 { 1.0 } else { matched as f64 / occ_ref as f64 },
        hallucination_rate: halluc as f64 / n,
        language_mismatch_rate: mismatch as f64 / n,
        rows,
    }
}
