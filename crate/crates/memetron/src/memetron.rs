//! The memetic hybrid: every offspring of the evolutionary loop is locally
//! refined by an annealing run before the history update and elitism.
//!
//! Two degenerate forms recover the pure algorithms exactly: zero annealing
//! steps reproduce the evolutionary transcript candidate-for-candidate, and a
//! generation-free single-candidate run reduces to one annealing run on the
//! initial response.

use serde::{Deserialize, Serialize};

use crate::annetron::{anneal_from, AnnealSetup, AnnetronConfig};
use crate::error::Result;
use crate::genetron::{run_evolution, GenetronConfig};
use crate::history::HistoryBuffer;
use crate::model::GeneratorRequest;
use crate::reward::RewardMode;
use crate::rng::{child_seed, StreamTag};
use crate::search::{
    GenerationRecord, LogRecord, SearchContext, SearchOutcome, StopReason,
};
use crate::types::{NewCandidate, Origin, SamplingParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MemetronConfig {
    pub genetron: GenetronConfig,
    pub annetron: AnnetronConfig,
}

impl MemetronConfig {
    pub fn validate(&self) -> Result<()> {
        self.genetron.validate()?;
        self.annetron.validate()
    }
}

pub fn run_memetron(ctx: &SearchContext, config: &MemetronConfig) -> Result<SearchOutcome> {
    config.validate()?;
    if config.genetron.max_generations == 0 && config.annetron.steps > 0 {
        return run_local_only(ctx, config);
    }
    run_evolution(ctx, &config.genetron, Some(&config.annetron), Some("memetron"))
}

/// Generation-free hybrid: sample the initial population and refine each
/// member. With a single candidate this is exactly one annealing run.
fn run_local_only(ctx: &SearchContext, config: &MemetronConfig) -> Result<SearchOutcome> {
    let n = config.genetron.population_size;
    let mut history = HistoryBuffer::new(&ctx.prompt.id);
    let mut log = Vec::new();

    let generation_seed = child_seed(ctx.seed, StreamTag::Generation, 0);
    let request = GeneratorRequest::new(
        ctx.prompt.text.clone(),
        SamplingParams {
            seed: Some(child_seed(generation_seed, StreamTag::Init, 0)),
            ..ctx.sampling.clone()
        },
        n,
    )?;
    let response = ctx.generator.generate(&request)?;
    let anchored = matches!(ctx.scorer.mode(), RewardMode::Anchored { .. });
    let init_anchor = anchored.then(|| response.texts[0].clone());
    let scores = ctx.scorer.score_texts(
        &ctx.prompt,
        &response.texts,
        response.logprobs.as_deref(),
        init_anchor.as_deref(),
    )?;
    let mut initial = Vec::with_capacity(n as usize);
    for (text, score) in response.texts.iter().zip(&scores) {
        initial.push(history.record(NewCandidate {
            text: text.clone(),
            reward: Some(*score),
            origin: Origin::Initial,
            generation: 0,
            created_at_call: ctx.budget.used_model_calls(),
        })?);
    }

    let mut lineage = initial.clone();
    let mut stopped_by = StopReason::Completed;
    let mut trace = Vec::new();
    for (slot, start) in initial.iter().enumerate() {
        let allowance =
            ctx.budget.remaining_model_calls() / (u64::from(n) - slot as u64).max(1);
        let outcome = anneal_from(
            ctx,
            &mut history,
            &config.annetron,
            AnnealSetup {
                start: *start,
                anneal_seed: child_seed(generation_seed, StreamTag::Anneal, slot as u64),
                generation: 0,
                call_allowance: Some(allowance),
                algorithm: Some("memetron"),
                offspring_slot: Some(slot as u32),
            },
            &mut log,
        )?;
        lineage.extend(outcome.accepted.iter().copied());
        if outcome.stopped_by == StopReason::BudgetExhausted {
            stopped_by = StopReason::BudgetExhausted;
        }
        if slot == 0 {
            trace = outcome.trace;
        }
    }

    let best = history.best_among(lineage.iter().copied())?.id;
    let best_reward = history.get(best).unwrap().reward.unwrap_or_default();
    log.push(LogRecord::Generation(GenerationRecord {
        algorithm: Some("memetron".into()),
        phase: Some("anneal".into()),
        generation: 0,
        best: best_reward,
        mean: best_reward,
        model_calls: ctx.budget.used_model_calls(),
    }));
    Ok(SearchOutcome {
        best,
        lineage,
        trace,
        stopped_by,
        history,
        log,
    })
}
