//! Crate-wide error type.

use crate::types::CandidateId;

pub type Result<T> = std::result::Result<T, Error>;

/// Which budget counter a refused operation would have exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BudgetKind {
    ModelCalls,
    RewardEvals,
}

impl std::fmt::Display for BudgetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BudgetKind::ModelCalls => write!(f, "model calls"),
            BudgetKind::RewardEvals => write!(f, "reward evaluations"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("budget exceeded: {requested} {kind} requested, {used}/{max} used")]
    BudgetExceeded {
        kind: BudgetKind,
        requested: u64,
        used: u64,
        max: u64,
    },

    #[error("history is empty or holds no scored candidate")]
    EmptyHistory,

    #[error("candidate references parent {parent} which is not in the history")]
    DanglingParent { parent: CandidateId },

    #[error("reward must be finite, got {value}")]
    NonFiniteReward { value: f64 },

    #[error("candidate {id} has no reward")]
    UnscoredCandidate { id: CandidateId },

    #[error("history holds {available} scored candidates, {required} required")]
    InsufficientHistory { available: usize, required: usize },

    #[error("fusion parents must be distinct, both are candidate {id}")]
    IdenticalParents { id: CandidateId },

    #[error("refinement source text is empty")]
    EmptyResponseText,

    #[error("prompt template error: {0}")]
    Template(String),

    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    #[error("rate limit persisted after {attempts} attempts")]
    RateLimited { attempts: u32 },

    #[error("empty completion at sample index {index}")]
    EmptyCompletion { index: usize },

    #[error("all {n} samples of one operation failed")]
    AllSamplesFailed { n: u32 },

    #[error("sample is degenerate (all values equal)")]
    DegenerateSample,

    #[error("sample size {n} outside supported range {min}..={max}")]
    SizeOutOfRange { n: usize, min: usize, max: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("pooled variance is zero")]
    ZeroPooledVariance,

    #[error("p-value {0} outside [0, 1]")]
    InvalidPValue(f64),

    #[error("no generation {generation} data for question {question}")]
    MissingGeneration { question: String, generation: u32 },

    #[error("{path}:{line}: {message}")]
    MalformedLine {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    /// True for errors that stop a search loop gracefully rather than failing the run.
    pub fn is_budget_exhausted(&self) -> bool {
        matches!(self, Error::BudgetExceeded { .. })
    }
}
