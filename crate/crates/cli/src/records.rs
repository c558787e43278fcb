//! On-disk record formats shared by the subcommands.

use std::path::Path;

use asrl_core::toytask::{ToyPolicy, ToyUtterance, ToyVocab};
use asrl_core::trainer::TrainRecord;
use serde::{Deserialize, Serialize};

use crate::failure::{runtime_msg, Classify, Failure};

/// One toy dataset row: an utterance with a stable id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    #[serde(flatten)]
    pub utt: ToyUtterance,
}

/// Serialized policy checkpoint.
#[derive(Debug, Serialize, Deserialize)]
pub struct PolicyFile {
    pub v_tok: u32,
    pub params: Vec<f64>,
}

impl PolicyFile {
    pub fn from_policy(policy: &ToyPolicy) -> Self {
        PolicyFile { v_tok: policy.v_tok(), params: policy.params().to_vec() }
    }

    pub fn into_policy(self) -> Result<ToyPolicy, Failure> {
        let mut policy = ToyPolicy::new(self.v_tok);
        if self.params.len() != policy.params().len() {
            return Err(runtime_msg(format!(
                "checkpoint has {} parameters, expected {} for v_tok={}",
                self.params.len(),
                policy.params().len(),
                self.v_tok
            )));
        }
        policy.params_mut().copy_from_slice(&self.params);
        Ok(policy)
    }
}

pub fn load_policy(path: &Path) -> Result<ToyPolicy, Failure> {
    let text = std::fs::read_to_string(path)
        .runtime_context(format!("reading checkpoint {}", path.display()))?;
    let file: PolicyFile = serde_json::from_str(&text)
        .runtime_context(format!("parsing checkpoint {}", path.display()))?;
    file.into_policy()
}

/// Reads a dataset and converts rows to training records against `vocab`.
pub fn load_dataset(path: &Path, vocab: &ToyVocab) -> Result<Vec<TrainRecord>, Failure> {
    let rows: Vec<DatasetRow> = asrl_core::jsonl::read_jsonl(path).or_runtime()?;
    let mut records = Vec::with_capacity(rows.len());
    for row in &rows {
        let record = TrainRecord::from_utterance(row.id.clone(), &row.utt, vocab)
            .map_err(|e| runtime_msg(format!("row {}: {e}", row.id)))?;
        records.push(record);
    }
    Ok(records)
}
