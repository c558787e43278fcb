//! Core library for a small reinforcement-learning ASR pipeline.
//!
//! The crate is organized around a toy autoregressive transcription task that
//! is cheap enough to train on a CPU, plus the production-shaped machinery
//! around it: text metrics (alignment, WER, keyword stats), a composite
//! reward function, group-relative policy optimization, hotword retrieval
//! over phoneme/word-piece units, data curation for RL fine-tuning sets, and
//! waveform augmentation utilities.
//!
//! Everything is deterministic given explicit seeds; no global RNG state.

pub mod augment;
pub mod curation;
pub mod grpo;
pub mod hotword;
pub mod jsonl;
pub mod rewards;
pub mod textmetrics;
pub mod toytask;
pub mod trainer;
pub mod wav;

pub use augment::{ChunkSpec, MixOutcome, PaddedWaveform, SnrSpec, Waveform};
pub use curation::{
    CurationThresholds, ExternalHyps, RlManifest, SubsetTargets, UtteranceRecord,
};
pub use grpo::{GrpoConfig, Policy, RolloutGroup, StepReport};
pub use hotword::{HotwordCandidate, HotwordVocab, Lexicon, RetrievalConfig, UnitMode};
pub use rewards::{RewardBreakdown, RewardConfig};
pub use textmetrics::{AlignmentResult, EditOp, KeywordStats, TokenMode, TokenSeq};
pub use toytask::{ChannelConfig, ObsSequence, ToyPolicy, ToyVocab};
pub use trainer::{EvalReport, TrainOutcome, TrainRecord, TrainerConfig};
