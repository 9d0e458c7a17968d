//! Shared machinery for the three search loops: the per-run context handed to
//! every algorithm, run outcomes, and structured log records.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::error::Result;
use crate::history::HistoryBuffer;
use crate::model::{BudgetedGenerator, Generator};
use crate::prompts::{PromptTemplate, RenderOptions};
use crate::reward::{RewardMode, Scorer};
use crate::types::{CandidateId, Prompt, SamplingParams};

/// Everything one search run needs: the prompt, a budgeted generator, a
/// caching scorer, templates, and the per-prompt seed all streams derive from.
pub struct SearchContext {
    pub prompt: Prompt,
    pub generator: BudgetedGenerator,
    pub scorer: Scorer,
    pub budget: Arc<Budget>,
    pub sampling: SamplingParams,
    pub fusion_template: PromptTemplate,
    pub refine_template: PromptTemplate,
    pub render: RenderOptions,
    pub seed: u64,
}

impl SearchContext {
    pub fn new(
        prompt: Prompt,
        backend: Arc<dyn Generator>,
        reward: RewardMode,
        budget: Arc<Budget>,
        sampling: SamplingParams,
        render: RenderOptions,
        seed: u64,
    ) -> Self {
        SearchContext {
            prompt,
            generator: BudgetedGenerator::new(backend, budget.clone()),
            scorer: Scorer::new(reward, budget.clone()),
            budget,
            sampling,
            fusion_template: PromptTemplate::fusion_default(),
            refine_template: PromptTemplate::refine_default(),
            render,
            seed,
        }
    }
}

/// Why a search loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The configured generation/step limit was reached.
    Completed,
    /// The patience criterion fired.
    Converged,
    /// A budget would have been exceeded; partial results were kept.
    BudgetExhausted,
}

/// Per-generation progress record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    pub generation: u32,
    pub best: f64,
    pub mean: f64,
    pub model_calls: u64,
}

/// Per-annealing-step record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation: Option<u32>,
    /// Offspring slot whose refinement produced this step, in hybrid runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offspring: Option<u32>,
    pub step: u32,
    #[serde(rename = "T")]
    pub temperature: f64,
    pub proposal_reward: f64,
    pub delta: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Generation(GenerationRecord),
    Step(StepRecord),
}

/// Result of one complete search run over a single prompt.
#[derive(Debug)]
pub struct SearchOutcome {
    pub history: HistoryBuffer,
    /// Highest-reward member of the lineage-eligible set.
    pub best: CandidateId,
    /// The algorithm's history-set membership: initial population plus, per
    /// generation, the post-refinement offspring (for annealing runs, the
    /// accepted candidates). Rejected proposals stay in `history` but not here.
    pub lineage: Vec<CandidateId>,
    /// Best eligible reward after generation 0, 1, ... (or per annealing step).
    pub trace: Vec<f64>,
    pub stopped_by: StopReason,
    pub log: Vec<LogRecord>,
}

impl SearchOutcome {
    pub fn best_candidate(&self) -> Result<&crate::types::Candidate> {
        self.history
            .get(self.best)
            .ok_or(crate::error::Error::EmptyHistory)
    }
}
