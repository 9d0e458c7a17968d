//! Reward-guided metaheuristic search over black-box text-generator outputs.
//!
//! Three search algorithms share one machinery: a population-based evolutionary
//! loop whose crossover operator is the generator itself (fusion prompts), a
//! simulated-annealing loop whose neighbourhood operator is a refinement
//! prompt, and the memetic hybrid that locally refines every offspring before
//! elitism. Runs are driven by a pluggable reward function, accounted against
//! explicit call budgets, fully reproducible under a fixed seed, and persisted
//! as append-only JSONL histories that the statistics pipeline consumes.

pub mod annetron;
pub mod budget;
pub mod config;
pub mod error;
pub mod genetron;
pub mod history;
pub mod memetron;
pub mod model;
pub mod net;
pub mod prompts;
pub mod reward;
pub mod rng;
pub mod run;
pub mod rundir;
pub mod search;
pub mod stats;
pub mod types;

pub use crate::annetron::{run_annetron, AnnetronConfig};
pub use crate::budget::{Budget, BudgetSpec};
pub use crate::config::{Algorithm, RunConfig};
pub use crate::error::{Error, Result};
pub use crate::genetron::{run_genetron, GenetronConfig};
pub use crate::history::HistoryBuffer;
pub use crate::memetron::{run_memetron, MemetronConfig};
pub use crate::search::{SearchContext, SearchOutcome, StopReason};
pub use crate::types::{
    Candidate, CandidateId, NewCandidate, Origin, Prompt, SamplingParams, TemperatureSchedule,
};
