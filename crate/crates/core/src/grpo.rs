//! Group-relative policy optimization.
//!
//! Rollouts are grouped per prompt. Each group's scalar rewards are
//! normalized in place:
//!
//! ```text
//! A_i = (R_i - mean(R)) / popstd(R)
//! ```
//!
//! and the per-token objective is the clipped surrogate with a KL penalty
//! toward a frozen reference policy:
//!
//! ```text
//! L = (1/G) sum_i (1/|o_i|) sum_t [ min(r_t A_i, clip(r_t, 1-eps, 1+eps) A_i)
//!                                   - beta * KL_t ]
//! r_t  = exp(logp_new(t) - logp_old(t))
//! KL_t = exp(logp_ref(t) - logp_new(t)) - (logp_ref(t) - logp_new(t)) - 1
//! ```
//!
//! The sequence-level reward is broadcast: every token of response `i`
//! shares the advantage `A_i`. When a group's rewards are (numerically)
//! identical its advantages are all zero and the group is *inert*: it is
//! skipped entirely, contributing neither surrogate nor KL gradient, so a
//! batch of inert groups leaves the policy untouched.

use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("group has {0} responses, need at least 2 for advantage normalization")]
    GroupTooSmall(usize),
    #[error("group has {got} responses but group_size is {expected}")]
    GroupSizeMismatch { expected: usize, got: usize },
    #[error("group shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("reward {0} is not finite")]
    NonFiniteReward(f64),
    #[error("logprob is not finite")]
    NonFiniteLogprob,
    #[error("gradient became non-finite; step aborted before applying")]
    NonFiniteGradient,
    #[error("advantages not computed; call normalize first")]
    AdvantagesMissing,
    #[error("empty batch of groups")]
    EmptyBatch,
    #[error("policy error: {0}")]
    Policy(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    /// Responses sampled per prompt (G).
    pub group_size: usize,
    /// Clip half-width eps for the importance ratio.
    pub clip_eps: f64,
    /// KL penalty coefficient beta.
    pub kl_beta: f64,
    pub learning_rate: f64,
    /// Population std below this marks a group inert.
    pub std_floor: f64,
    /// Sampling cap on response length, end token included.
    pub max_response_len: usize,
    pub steps: usize,
    pub seed: u64,
    /// Prompts (groups) collected per optimizer step.
    pub groups_per_step: usize,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_eps: 0.2,
            kl_beta: 0.02,
            learning_rate: 0.05,
            std_floor: 1e-8,
            max_response_len: 16,
            steps: 200,
            seed: 0,
            groups_per_step: 1,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: String| Err(GrpoError::InvalidConfig(m));
        if self.group_size < 2 {
            return bad(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps must be in (0, 1), got {}", self.clip_eps));
        }
        if !self.kl_beta.is_finite() || self.kl_beta < 0.0 {
            return bad(format!("kl_beta must be >= 0, got {}", self.kl_beta));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if !self.std_floor.is_finite() || self.std_floor <= 0.0 {
            return bad(format!("std_floor must be > 0, got {}", self.std_floor));
        }
        if self.max_response_len == 0 {
            return bad("max_response_len must be >= 1".into());
        }
        if self.groups_per_step == 0 {
            return bad("groups_per_step must be >= 1".into());
        }
        Ok(())
    }
}

/// Tokens drawn from a policy together with their logprobs at sampling time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledResponse {
    pub tokens: Vec<u32>,
    pub logprobs: Vec<f64>,
}

/// What the optimizer needs from a policy. Observations and tokens are raw
/// id slices so the optimizer stays independent of any concrete model.
pub trait Policy {
    fn param_count(&self) -> usize;

    /// Per-token logprobs of `tokens` given `obs` under the current
    /// parameters. Must return exactly `tokens.len()` values.
    fn logprobs(&self, obs: &[u32], tokens: &[u32]) -> Result<Vec<f64>, GrpoError>;

    /// Adds `sum_t weights[t] * d logp(tokens[t]) / d theta` into `grad`.
    fn accumulate_weighted_grad(
        &self,
        obs: &[u32],
        tokens: &[u32],
        weights: &[f64],
        grad: &mut [f64],
    ) -> Result<(), GrpoError>;

    /// Draws one response, recording logprobs as it goes.
    fn sample(&self, obs: &[u32], rng: &mut dyn RngCore, max_len: usize) -> SampledResponse;

    /// Gradient-ascent update: theta += learning_rate * grad.
    fn apply_update(&mut self, grad: &[f64], learning_rate: f64);

    /// Frozen copy, used for the sampling snapshot and the KL reference.
    fn snapshot(&self) -> Self
    where
        Self: Sized + Clone,
    {
        self.clone()
    }
}

/// One prompt's worth of rollouts plus the logprob bookkeeping the
/// objective needs.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub obs: Vec<u32>,
    pub responses: Vec<Vec<u32>>,
    /// Logprobs under the sampling snapshot (on-policy: equal to the current
    /// policy's at collection time).
    pub old_logprobs: Vec<Vec<f64>>,
    /// Logprobs under the fixed KL reference policy.
    pub ref_logprobs: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub advantages: Option<Vec<f64>>,
    pub inert: bool,
}

impl RolloutGroup {
    pub fn new(obs: Vec<u32>) -> Self {
        RolloutGroup {
            obs,
            responses: Vec::new(),
            old_logprobs: Vec::new(),
            ref_logprobs: Vec::new(),
            rewards: Vec::new(),
            advantages: None,
            inert: false,
        }
    }

    fn validate_shape(&self) -> Result<(), GrpoError> {
        let g = self.responses.len();
        if self.old_logprobs.len() != g || self.ref_logprobs.len() != g || self.rewards.len() != g
        {
            return Err(GrpoError::ShapeMismatch(format!(
                "responses={}, old_logprobs={}, ref_logprobs={}, rewards={}",
                g,
                self.old_logprobs.len(),
                self.ref_logprobs.len(),
                self.rewards.len()
            )));
        }
        for i in 0..g {
            let n = self.responses[i].len();
            if self.old_logprobs[i].len() != n || self.ref_logprobs[i].len() != n {
                return Err(GrpoError::ShapeMismatch(format!(
                    "response {i}: {} tokens, {} old logprobs, {} ref logprobs",
                    n,
                    self.old_logprobs[i].len(),
                    self.ref_logprobs[i].len()
                )));
            }
            if self.old_logprobs[i].iter().chain(&self.ref_logprobs[i]).any(|l| !l.is_finite()) {
                return Err(GrpoError::NonFiniteLogprob);
            }
        }
        Ok(())
    }

    /// Computes advantages in place and flags inertness.
    pub fn normalize(&mut self, std_floor: f64) -> Result<(), GrpoError> {
        let (adv, inert) = normalize_advantages(&self.rewards, std_floor)?;
        self.advantages = Some(adv);
        self.inert = inert;
        Ok(())
    }
}

/// Group-relative advantage normalization with the population std.
/// Returns the advantages and whether the group is inert (std under the
/// floor, advantages forced to zero).
pub fn normalize_advantages(
    rewards: &[f64],
    std_floor: f64,
) -> Result<(Vec<f64>, bool), GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(GrpoError::NonFiniteReward(*r));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < std_floor {
        return Ok((vec![0.0; rewards.len()], true));
    }
    Ok((rewards.iter().map(|r| (r - mean) / std).collect(), false))
}

/// Importance ratio between current and sampling-time logprobs.
pub fn importance_ratio(new_logprob: f64, old_logprob: f64) -> f64 {
    (new_logprob - old_logprob).exp()
}

/// Per-token KL estimate toward the reference policy:
/// `exp(ref - new) - (ref - new) - 1`. Non-negative, zero iff equal.
pub fn kl_token(new_logprob: f64, ref_logprob: f64) -> f64 {
    let d = ref_logprob - new_logprob;
    d.exp() - d - 1.0
}

/// Aggregates from evaluating one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupEval {
    pub objective: f64,
    pub kl_sum: f64,
    pub tokens: usize,
    /// Tokens where the clipped branch strictly dominated.
    pub clipped_tokens: usize,
}

fn eval_group<P: Policy>(
    group: &RolloutGroup,
    policy: &P,
    cfg: &GrpoConfig,
    mut grad: Option<(&mut [f64], f64)>,
) -> Result<GroupEval, GrpoError> {
    group.validate_shape()?;
    let adv = group.advantages.as_ref().ok_or(GrpoError::AdvantagesMissing)?;
    if adv.len() != group.responses.len() {
        return Err(GrpoError::ShapeMismatch(format!(
            "{} advantages for {} responses",
            adv.len(),
            group.responses.len()
        )));
    }
    let g = group.responses.len() as f64;
    let mut eval = GroupEval { objective: 0.0, kl_sum: 0.0, tokens: 0, clipped_tokens: 0 };
    let mut weights: Vec<f64> = Vec::new();
    for (i, tokens) in group.responses.iter().enumerate() {
        let lp = policy.logprobs(&group.obs, tokens)?;
        if lp.len() != tokens.len() {
            return Err(GrpoError::Policy(format!(
                "policy returned {} logprobs for {} tokens",
                lp.len(),
                tokens.len()
            )));
        }
        let a = adv[i];
        let norm = 1.0 / (g * tokens.len().max(1) as f64);
        weights.clear();
        weights.resize(tokens.len(), 0.0);
        for t in 0..tokens.len() {
            let ratio = importance_ratio(lp[t], group.old_logprobs[i][t]);
            let unclipped = ratio * a;
            let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a;
            // min() of the two branches; the derivative follows the active
            // branch (zero once the clip is binding).
            let (surrogate, dsurrogate) =
                if unclipped <= clipped { (unclipped, ratio * a) } else { (clipped, 0.0) };
            let kl = kl_token(lp[t], group.ref_logprobs[i][t]);
            let dkl = cfg.kl_beta * ((group.ref_logprobs[i][t] - lp[t]).exp() - 1.0);
            eval.objective += (surrogate - cfg.kl_beta * kl) * norm;
            eval.kl_sum += kl;
            eval.tokens += 1;
            if unclipped > clipped {
                eval.clipped_tokens += 1;
            }
            weights[t] = dsurrogate + dkl;
        }
        if let Some((acc, scale)) = grad.as_mut() {
            for w in &mut weights {
                *w *= norm * *scale;
            }
            policy.accumulate_weighted_grad(&group.obs, tokens, &weights, acc)?;
        }
    }
    Ok(eval)
}

/// Objective value of one group under the current policy. Advantages must
/// have been computed (see [`RolloutGroup::normalize`]).
pub fn group_objective<P: Policy>(
    group: &RolloutGroup,
    policy: &P,
    cfg: &GrpoConfig,
) -> Result<GroupEval, GrpoError> {
    eval_group(group, policy, cfg, None)
}

/// Like [`group_objective`] but also accumulates `scale * dL/dtheta` into
/// `grad`, which must have `policy.param_count()` entries.
pub fn group_objective_and_grad<P: Policy>(
    group: &RolloutGroup,
    policy: &P,
    cfg: &GrpoConfig,
    grad: &mut [f64],
    scale: f64,
) -> Result<GroupEval, GrpoError> {
    if grad.len() != policy.param_count() {
        return Err(GrpoError::ShapeMismatch(format!(
            "grad buffer has {} entries, policy has {} parameters",
            grad.len(),
            policy.param_count()
        )));
    }
    eval_group(group, policy, cfg, Some((grad, scale)))
}

/// One optimizer step's scalars, serialized as a training-log line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub clip_fraction: f64,
    pub inert_groups: usize,
    pub wall_ms: u64,
}

/// Runs one update: normalizes every group, averages gradients over the
/// non-inert ones, and applies a single gradient-ascent step. The policy is
/// untouched when every group is inert or when the gradient goes non-finite
/// (the latter is an error).
pub fn train_step<P: Policy>(
    groups: &mut [RolloutGroup],
    policy: &mut P,
    cfg: &GrpoConfig,
) -> Result<StepReport, GrpoError> {
    let start = Instant::now();
    cfg.validate()?;
    if groups.is_empty() {
        return Err(GrpoError::EmptyBatch);
    }

    let mut reward_sum = 0.0;
    let mut reward_count = 0usize;
    for group in groups.iter_mut() {
        if group.responses.len() != cfg.group_size {
            return Err(GrpoError::GroupSizeMismatch {
                expected: cfg.group_size,
                got: group.responses.len(),
            });
        }
        group.validate_shape()?;
        group.normalize(cfg.std_floor)?;
        reward_sum += group.rewards.iter().sum::<f64>();
        reward_count += group.rewards.len();
    }

    let active = groups.iter().filter(|g| !g.inert).count();
    let inert_groups = groups.len() - active;
    let mut grad = vec![0.0; policy.param_count()];
    let mut kl_sum = 0.0;
    let mut tokens = 0usize;
    let mut clipped = 0usize;
    if active > 0 {
        let scale = 1.0 / active as f64;
        for group in groups.iter().filter(|g| !g.inert) {
            let eval = group_objective_and_grad(group, policy, cfg, &mut grad, scale)?;
            kl_sum += eval.kl_sum;
            tokens += eval.tokens;
            clipped += eval.clipped_tokens;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(GrpoError::NonFiniteGradient);
        }
        policy.apply_update(&grad, cfg.learning_rate);
    }

    Ok(StepReport {
        step: 0,
        mean_reward: if reward_count > 0 { reward_sum / reward_count as f64 } else { 0.0 },
        mean_kl: if tokens > 0 { kl_sum / tokens as f64 } else { 0.0 },
        clip_fraction: if tokens > 0 { clipped as f64 / tokens as f64 } else { 0.0 },
        inert_groups,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}
