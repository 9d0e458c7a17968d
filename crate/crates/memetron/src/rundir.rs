//! Run-directory layout and the self-describing manifest.
//!
//! One run directory holds, per prompt, an append-only candidate history
//! (`history_<prompt_id>.jsonl`), a structured progress log
//! (`log_<prompt_id>.jsonl`), and a single `manifest.json` echoing the full
//! configuration plus per-prompt outcomes, so later analysis needs no
//! external state. Annealing acceptance lives in the step log; a history
//! line's membership in the algorithm's history set is recorded in the
//! manifest's `lineage` field.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::history::HistoryBuffer;
use crate::search::{LogRecord, SearchOutcome, StopReason};
use crate::types::CandidateId;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

pub fn manifest_path(run_dir: &Path) -> PathBuf {
    run_dir.join("manifest.json")
}

pub fn history_path(run_dir: &Path, prompt_id: &str) -> PathBuf {
    run_dir.join(format!("history_{prompt_id}.jsonl"))
}

pub fn log_path(run_dir: &Path, prompt_id: &str) -> PathBuf {
    run_dir.join(format!("log_{prompt_id}.jsonl"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSummary {
    pub prompt_id: String,
    pub prompt_text: String,
    pub status: PromptStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_by: Option<StopReason>,
    pub history_len: usize,
    /// Ids forming the algorithm's history set (initial population plus
    /// post-refinement offspring / accepted candidates).
    pub lineage: Vec<CandidateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_id: Option<CandidateId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_reward: Option<f64>,
    pub used_model_calls: u64,
    pub used_reward_evals: u64,
}

impl PromptSummary {
    pub fn completed(prompt: &crate::types::Prompt, outcome: &SearchOutcome, calls: u64, evals: u64) -> Self {
        PromptSummary {
            prompt_id: prompt.id.clone(),
            prompt_text: prompt.text.clone(),
            status: PromptStatus::Completed,
            error: None,
            stopped_by: Some(outcome.stopped_by),
            history_len: outcome.history.len(),
            lineage: outcome.lineage.clone(),
            best_id: Some(outcome.best),
            best_reward: outcome.history.get(outcome.best).and_then(|c| c.reward),
            used_model_calls: calls,
            used_reward_evals: evals,
        }
    }

    pub fn failed(prompt: &crate::types::Prompt, error: &Error) -> Self {
        PromptSummary {
            prompt_id: prompt.id.clone(),
            prompt_text: prompt.text.clone(),
            status: PromptStatus::Failed,
            error: Some(error.to_string()),
            stopped_by: None,
            history_len: 0,
            lineage: Vec::new(),
            best_id: None,
            best_reward: None,
            used_model_calls: 0,
            used_reward_evals: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Totals {
    pub prompts: usize,
    pub completed: usize,
    pub failed: usize,
    pub model_calls: u64,
    pub reward_evals: u64,
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub version: String,
    pub algorithm: String,
    pub config: RunConfig,
    pub prompts: Vec<PromptSummary>,
    pub totals: Totals,
}

impl Manifest {
    pub fn new(config: RunConfig, prompts: Vec<PromptSummary>) -> Self {
        let totals = Totals {
            prompts: prompts.len(),
            completed: prompts
                .iter()
                .filter(|p| p.status == PromptStatus::Completed)
                .count(),
            failed: prompts
                .iter()
                .filter(|p| p.status == PromptStatus::Failed)
                .count(),
            model_calls: prompts.iter().map(|p| p.used_model_calls).sum(),
            reward_evals: prompts.iter().map(|p| p.used_reward_evals).sum(),
            candidates: prompts.iter().map(|p| p.history_len).sum(),
        };
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").to_string(),
            algorithm: config.algorithm.name().to_string(),
            config,
            prompts,
            totals,
        }
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let mut writer = BufWriter::new(fs::File::create(manifest_path(run_dir))?);
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        Ok(())
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = manifest_path(run_dir);
        let file = fs::File::open(&path).map_err(|e| {
            Error::invalid("run_dir", format!("{}: {e}", path.display()))
        })?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn summary_for(&self, prompt_id: &str) -> Option<&PromptSummary> {
        self.prompts.iter().find(|p| p.prompt_id == prompt_id)
    }
}

pub fn write_history(run_dir: &Path, history: &HistoryBuffer) -> Result<()> {
    let mut writer = BufWriter::new(fs::File::create(history_path(
        run_dir,
        history.prompt_id(),
    ))?);
    history.write_jsonl(&mut writer)?;
    writer.flush()?;
    Ok(())
}

pub fn load_history(run_dir: &Path, prompt_id: &str) -> Result<HistoryBuffer> {
    let path = history_path(run_dir, prompt_id);
    let file = fs::File::open(&path)
        .map_err(|e| Error::invalid("run_dir", format!("{}: {e}", path.display())))?;
    HistoryBuffer::read_jsonl(prompt_id, &path.display().to_string(), BufReader::new(file))
}

pub fn write_log(run_dir: &Path, prompt_id: &str, records: &[LogRecord]) -> Result<()> {
    let mut writer = BufWriter::new(fs::File::create(log_path(run_dir, prompt_id))?);
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::{GenerationRecord, StepRecord};

    #[test]
    fn log_records_serialize_with_exact_shapes() {
        let generation = LogRecord::Generation(GenerationRecord {
            algorithm: None,
            phase: None,
            generation: 2,
            best: 1.5,
            mean: 0.75,
            model_calls: 64,
        });
        assert_eq!(
            serde_json::to_string(&generation).unwrap(),
            r#"{"generation":2,"best":1.5,"mean":0.75,"model_calls":64}"#
        );

        let step = LogRecord::Step(StepRecord {
            algorithm: None,
            phase: None,
            generation: None,
            offspring: None,
            step: 3,
            temperature: 0.81,
            proposal_reward: -2.0,
            delta: -0.5,
            accepted: false,
        });
        assert_eq!(
            serde_json::to_string(&step).unwrap(),
            r#"{"step":3,"T":0.81,"proposal_reward":-2.0,"delta":-0.5,"accepted":false}"#
        );

        let hybrid_step = LogRecord::Step(StepRecord {
            algorithm: Some("memetron".into()),
            phase: Some("anneal".into()),
            generation: Some(1),
            offspring: Some(4),
            step: 1,
            temperature: 1.5,
            proposal_reward: 0.0,
            delta: 1.0,
            accepted: true,
        });
        let text = serde_json::to_string(&hybrid_step).unwrap();
        assert!(text.contains(r#""algorithm":"memetron""#));
        assert!(text.contains(r#""phase":"anneal""#));
        assert!(text.contains(r#""offspring":4"#));
    }

    #[test]
    fn paths_are_prompt_scoped() {
        let dir = Path::new("/tmp/run");
        assert_eq!(
            history_path(dir, "q1"),
            PathBuf::from("/tmp/run/history_q1.jsonl")
        );
        assert_eq!(log_path(dir, "q1"), PathBuf::from("/tmp/run/log_q1.jsonl"));
        assert_eq!(manifest_path(dir), PathBuf::from("/tmp/run/manifest.json"));
    }
}
