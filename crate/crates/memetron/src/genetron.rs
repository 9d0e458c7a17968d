//! Population-based search: binary tournament selection, generator-driven
//! crossover with best-of-n mutation, cumulative-history elitism, and a
//! patience-based convergence rule.
//!
//! The same loop also powers the memetic hybrid: an optional refinement hook
//! runs simulated annealing on every offspring before elitism. With the hook
//! disabled the two transcripts are candidate-for-candidate identical.

use std::collections::HashSet;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::annetron::{anneal_from, AnnealSetup, AnnetronConfig};
use crate::error::{Error, Result};
use crate::history::HistoryBuffer;
use crate::model::GeneratorRequest;
use crate::prompts::render_fusion;
use crate::reward::RewardMode;
use crate::rng::{child_seed, index, stream_for, StreamTag};
use crate::search::{
    GenerationRecord, LogRecord, SearchContext, SearchOutcome, StopReason,
};
use crate::types::{Candidate, CandidateId, NewCandidate, Origin, SamplingParams};

/// Parent-pair sampling policy within a generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ParentPairing {
    /// Sample pairs at random, avoiding duplicate unordered pairs until they
    /// are exhausted; repetition is then allowed with a logged note.
    #[default]
    RandomWithDedup,
}

/// Where tournament winners come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ParentSelection {
    /// Two fresh tournaments per offspring slot.
    #[default]
    PerOffspring,
    /// One pool of tournament winners per generation; pairs are drawn from it.
    FixedPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenetronConfig {
    /// Population size N. Crossover needs at least 2; a single-candidate
    /// population is legal only for generation-free runs.
    pub population_size: u32,
    pub best_of_n: u32,
    pub max_generations: u32,
    pub patience: u32,
    /// Offspring produced per generation; defaults to the population size.
    #[serde(default)]
    pub offspring_per_generation: Option<u32>,
    /// Patience threshold on the best population reward. Zero disables early
    /// stopping, since the elitist best never decreases.
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub parent_pairing: ParentPairing,
    #[serde(default)]
    pub parent_selection: ParentSelection,
}

impl Default for GenetronConfig {
    /// The evaluation protocol's shape: 16 originals evolved for three
    /// generations with best-of-3 crossover sampling.
    fn default() -> Self {
        GenetronConfig {
            population_size: 16,
            best_of_n: 3,
            max_generations: 3,
            patience: 3,
            offspring_per_generation: None,
            delta: 0.0,
            parent_pairing: ParentPairing::RandomWithDedup,
            parent_selection: ParentSelection::PerOffspring,
        }
    }
}

impl GenetronConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::invalid("genetron.population_size", "must be at least 1"));
        }
        if self.population_size < 2 && self.max_generations > 0 {
            return Err(Error::invalid(
                "genetron.population_size",
                "crossover generations require at least 2 candidates",
            ));
        }
        if self.best_of_n == 0 {
            return Err(Error::invalid("genetron.best_of_n", "must be at least 1"));
        }
        if self.max_generations > 0
            && (self.patience == 0 || self.patience > self.max_generations)
        {
            return Err(Error::invalid(
                "genetron.patience",
                format!(
                    "must be in 1..=max_generations ({}), got {}",
                    self.max_generations, self.patience
                ),
            ));
        }
        if self.offspring_per_generation == Some(0) {
            return Err(Error::invalid(
                "genetron.offspring_per_generation",
                "must be at least 1 when set",
            ));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::invalid(
                "genetron.delta",
                format!("must be a non-negative real, got {}", self.delta),
            ));
        }
        Ok(())
    }
}

/// Binary tournament: two distinct entrants drawn uniformly, higher reward
/// wins, reward ties go to the lower id. A single-candidate population returns
/// that candidate.
pub fn tournament_select<'a>(
    population: &[&'a Candidate],
    rng: &mut impl RngCore,
) -> Result<&'a Candidate> {
    if population.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if population.len() == 1 {
        population[0].reward()?;
        return Ok(population[0]);
    }
    let first = index(rng, population.len());
    let mut second = index(rng, population.len() - 1);
    if second >= first {
        second += 1;
    }
    let (a, b) = (population[first], population[second]);
    let (ra, rb) = (a.reward()?, b.reward()?);
    Ok(if rb > ra || (rb == ra && b.id < a.id) {
        b
    } else {
        a
    })
}

/// Next population: the top `n` of the eligible history by reward. Equivalent
/// to the reward-sum-maximizing size-`n` subset; boundary ties go to lower ids.
pub fn elitism(history: &HistoryBuffer, n: usize) -> Result<Vec<CandidateId>> {
    history.top_n(n)
}

/// Patience rule: converged once the trace is longer than `patience` and the
/// last value improved on the value `patience` entries back by less than
/// `delta`.
pub fn converged(trace: &[f64], patience: usize, delta: f64) -> bool {
    trace.len() > patience && trace[trace.len() - 1] - trace[trace.len() - 1 - patience] < delta
}

/// Per-generation anchor for anchored-pairwise scoring. Generation 0 has no
/// scores yet, so it bootstraps on the first sampled response; later
/// generations anchor on the best of the initial population.
struct AnchorState {
    text: Option<String>,
}

impl AnchorState {
    fn new(ctx: &SearchContext) -> Self {
        AnchorState {
            text: match ctx.scorer.mode() {
                RewardMode::Anchored { .. } => Some(String::new()),
                _ => None,
            },
        }
    }

    fn for_init(&mut self, first_text: &str) -> Option<&str> {
        if let Some(text) = self.text.as_mut() {
            *text = first_text.to_string();
        }
        self.text.as_deref()
    }

    fn fix_to(&mut self, best_initial: &str) {
        if let Some(text) = self.text.as_mut() {
            *text = best_initial.to_string();
        }
    }

    fn get(&self) -> Option<&str> {
        self.text.as_deref()
    }
}

struct EvolutionState {
    history: HistoryBuffer,
    /// Candidates eligible for elitism and best-response selection: everything
    /// except rejected annealing proposals.
    eligible: Vec<CandidateId>,
    /// The algorithm's history-set membership (initial population, then the
    /// post-refinement offspring of each generation).
    lineage: Vec<CandidateId>,
    population: Vec<CandidateId>,
    trace: Vec<f64>,
    log: Vec<LogRecord>,
}

/// Initialize and score the generation-0 population.
fn init_population(
    ctx: &SearchContext,
    n: u32,
    anchor: &mut AnchorState,
    state: &mut EvolutionState,
) -> Result<()> {
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
    let anchor_text = anchor.for_init(&response.texts[0]);
    let scores = ctx.scorer.score_texts(
        &ctx.prompt,
        &response.texts,
        response.logprobs.as_deref(),
        anchor_text,
    )?;
    for (text, score) in response.texts.iter().zip(&scores) {
        let id = state.history.record(NewCandidate {
            text: text.clone(),
            reward: Some(*score),
            origin: Origin::Initial,
            generation: 0,
            created_at_call: ctx.budget.used_model_calls(),
        })?;
        state.eligible.push(id);
        state.lineage.push(id);
        state.population.push(id);
    }
    Ok(())
}

fn population_candidates<'a>(
    history: &'a HistoryBuffer,
    population: &[CandidateId],
) -> Vec<&'a Candidate> {
    population
        .iter()
        .map(|id| history.get(*id).expect("population ids are recorded"))
        .collect()
}

/// Select a distinct parent pair, avoiding unordered-pair repeats when
/// possible.
fn select_pair<'a>(
    members: &[&'a Candidate],
    rng: &mut impl RngCore,
    used_pairs: &mut HashSet<(CandidateId, CandidateId)>,
) -> Result<(&'a Candidate, &'a Candidate)> {
    const ATTEMPTS: u32 = 32;
    let mut fallback: Option<(&Candidate, &Candidate)> = None;
    for _ in 0..ATTEMPTS {
        let a = tournament_select(members, rng)?;
        let b = tournament_select(members, rng)?;
        if a.id == b.id {
            continue;
        }
        let key = (a.id.min(b.id), a.id.max(b.id));
        if used_pairs.insert(key) {
            return Ok((a, b));
        }
        fallback.get_or_insert((a, b));
    }
    if let Some((a, b)) = fallback {
        // Unique pairs exhausted (or unlucky draws); repetition is allowed.
        log::debug!("parent pair ({}, {}) repeated within a generation", a.id, b.id);
        return Ok((a, b));
    }
    // Tournaments kept returning one dominant winner; pair it with the best
    // other member.
    let a = tournament_select(members, rng)?;
    let b = members
        .iter()
        .filter(|c| c.id != a.id)
        .max_by(|x, y| {
            let (rx, ry) = (x.reward.unwrap_or(f64::MIN), y.reward.unwrap_or(f64::MIN));
            rx.partial_cmp(&ry).unwrap().then(y.id.cmp(&x.id))
        })
        .ok_or(Error::IdenticalParents { id: a.id })?;
    Ok((a, b))
}

/// Render the fusion prompt for one parent pair, draw `n` samples, score them,
/// and record the argmax sample as the offspring.
#[allow(clippy::too_many_arguments)]
fn crossover_mutate(
    ctx: &SearchContext,
    state: &mut EvolutionState,
    parent_a: CandidateId,
    parent_b: CandidateId,
    n: u32,
    generation: u32,
    request_seed: u64,
    anchor: Option<&str>,
) -> Result<CandidateId> {
    let (a, b) = (
        state.history.get(parent_a).ok_or(Error::DanglingParent { parent: parent_a })?,
        state.history.get(parent_b).ok_or(Error::DanglingParent { parent: parent_b })?,
    );
    a.reward()?;
    b.reward()?;
    let rendered = render_fusion(&ctx.fusion_template, &ctx.prompt, a, b, &ctx.render)?;
    let request = GeneratorRequest::new(
        rendered,
        SamplingParams {
            seed: Some(request_seed),
            ..ctx.sampling.clone()
        },
        n,
    )?;
    let response = ctx.generator.generate(&request)?;
    let scores = ctx.scorer.score_texts(
        &ctx.prompt,
        &response.texts,
        response.logprobs.as_deref(),
        anchor,
    )?;
    let (win_index, win_score) =
        crate::annetron::argmax(&scores).ok_or(Error::AllSamplesFailed { n })?;
    state.history.record(NewCandidate {
        text: response.texts[win_index].clone(),
        reward: Some(win_score),
        origin: Origin::Crossover {
            parent_a,
            parent_b,
            sample_index: win_index as u32,
        },
        generation,
        created_at_call: ctx.budget.used_model_calls(),
    })
}

/// The shared evolutionary loop. `refine` attaches an annealing run to every
/// offspring (the memetic hybrid); `None` is the purely evolutionary form.
pub(crate) fn run_evolution(
    ctx: &SearchContext,
    config: &GenetronConfig,
    refine: Option<&AnnetronConfig>,
    algorithm: Option<&'static str>,
) -> Result<SearchOutcome> {
    config.validate()?;
    if let Some(annetron) = refine {
        annetron.validate()?;
    }
    let n = config.population_size;
    let mut anchor = AnchorState::new(ctx);
    let mut state = EvolutionState {
        history: HistoryBuffer::new(&ctx.prompt.id),
        eligible: Vec::new(),
        lineage: Vec::new(),
        population: Vec::new(),
        trace: Vec::new(),
        log: Vec::new(),
    };
    let mut stopped_by = StopReason::Completed;

    init_population(ctx, n, &mut anchor, &mut state)?;
    // Later generations of anchored runs compare against the best initial
    // response.
    let best_initial_text = state
        .history
        .best_among(state.population.iter().copied())?
        .text
        .clone();
    anchor.fix_to(&best_initial_text);
    push_generation_record(ctx, &mut state, algorithm, init_phase(algorithm), 0)?;

    'generations: for generation in 1..=config.max_generations {
        if converged(&state.trace, config.patience as usize, config.delta) {
            stopped_by = StopReason::Converged;
            break;
        }
        let generation_seed = child_seed(ctx.seed, StreamTag::Generation, u64::from(generation));
        let offspring_count = config.offspring_per_generation.unwrap_or(n);
        let mut used_pairs: HashSet<(CandidateId, CandidateId)> = HashSet::new();

        // Optional fixed winner pool, one tournament sweep per generation.
        let pool: Option<Vec<CandidateId>> = match config.parent_selection {
            ParentSelection::PerOffspring => None,
            ParentSelection::FixedPool => {
                let members = population_candidates(&state.history, &state.population);
                let mut pool_rng = stream_for(generation_seed, StreamTag::Select, u64::MAX);
                Some(
                    (0..offspring_count)
                        .map(|_| tournament_select(&members, &mut pool_rng).map(|c| c.id))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };

        let mut offspring: Vec<CandidateId> = Vec::with_capacity(offspring_count as usize);
        for slot in 0..offspring_count {
            let mut select_rng =
                stream_for(generation_seed, StreamTag::Select, u64::from(slot));
            let parent_ids = {
                let source: Vec<&Candidate> = match &pool {
                    Some(pool_ids) => population_candidates(&state.history, pool_ids),
                    None => population_candidates(&state.history, &state.population),
                };
                let (a, b) = select_pair(&source, &mut select_rng, &mut used_pairs)?;
                (a.id, b.id)
            };
            let produced = crossover_mutate(
                ctx,
                &mut state,
                parent_ids.0,
                parent_ids.1,
                config.best_of_n,
                generation,
                child_seed(generation_seed, StreamTag::Crossover, u64::from(slot)),
                anchor.get(),
            );
            match produced {
                Ok(id) => {
                    state.eligible.push(id);
                    offspring.push(id);
                }
                Err(e) if e.is_budget_exhausted() => {
                    stopped_by = StopReason::BudgetExhausted;
                    break;
                }
                Err(e) => return Err(e),
            }
        }

        // Memetic hook: refine each offspring, replacing it with the best of
        // its annealing run. Accepted intermediates become elitism-eligible.
        if let Some(annetron) = refine.filter(|_| stopped_by != StopReason::BudgetExhausted) {
            let slots = offspring.len() as u64;
            for (slot, member) in offspring.iter_mut().enumerate() {
                let allowance =
                    ctx.budget.remaining_model_calls() / (slots - slot as u64).max(1);
                let outcome = anneal_from(
                    ctx,
                    &mut state.history,
                    annetron,
                    AnnealSetup {
                        start: *member,
                        anneal_seed: child_seed(
                            generation_seed,
                            StreamTag::Anneal,
                            slot as u64,
                        ),
                        generation,
                        call_allowance: Some(allowance),
                        algorithm,
                        offspring_slot: Some(slot as u32),
                    },
                    &mut state.log,
                )?;
                state.eligible.extend(outcome.accepted.iter().copied());
                *member = outcome.best;
            }
        }
        state.lineage.extend(offspring.iter().copied());

        if stopped_by == StopReason::BudgetExhausted {
            // Mid-generation exhaustion finalizes with what was produced.
            break 'generations;
        }

        state.population = top_n_of(&state.history, &state.eligible, n as usize)?;
        push_generation_record(ctx, &mut state, algorithm, main_phase(algorithm), generation)?;
    }

    let best = state
        .history
        .best_among(state.eligible.iter().copied())?
        .id;
    Ok(SearchOutcome {
        best,
        lineage: state.lineage,
        trace: state.trace,
        stopped_by,
        history: state.history,
        log: state.log,
    })
}

fn init_phase(algorithm: Option<&'static str>) -> Option<&'static str> {
    algorithm.map(|_| "init")
}

fn main_phase(algorithm: Option<&'static str>) -> Option<&'static str> {
    algorithm.map(|_| "crossover")
}

/// Top `n` by reward restricted to the eligible set.
fn top_n_of(
    history: &HistoryBuffer,
    eligible: &[CandidateId],
    n: usize,
) -> Result<Vec<CandidateId>> {
    let mut scored: Vec<(f64, CandidateId)> = Vec::with_capacity(eligible.len());
    for id in eligible {
        let candidate = history.get(*id).ok_or(Error::DanglingParent { parent: *id })?;
        if let Some(reward) = candidate.reward {
            scored.push((reward, *id));
        }
    }
    if scored.len() < n {
        return Err(Error::InsufficientHistory {
            available: scored.len(),
            required: n,
        });
    }
    scored.sort_by(|(ra, ia), (rb, ib)| {
        rb.partial_cmp(ra).expect("rewards are finite").then(ia.cmp(ib))
    });
    Ok(scored.into_iter().take(n).map(|(_, id)| id).collect())
}

fn push_generation_record(
    ctx: &SearchContext,
    state: &mut EvolutionState,
    algorithm: Option<&'static str>,
    phase: Option<&'static str>,
    generation: u32,
) -> Result<()> {
    let members = population_candidates(&state.history, &state.population);
    let mut best = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for member in &members {
        let reward = member.reward()?;
        best = best.max(reward);
        sum += reward;
    }
    let mean = sum / members.len() as f64;
    state.trace.push(best);
    state.log.push(LogRecord::Generation(GenerationRecord {
        algorithm: algorithm.map(str::to_string),
        phase: phase.map(str::to_string),
        generation,
        best,
        mean,
        model_calls: ctx.budget.used_model_calls(),
    }));
    Ok(())
}

/// Purely evolutionary search (no refinement hook).
pub fn run_genetron(ctx: &SearchContext, config: &GenetronConfig) -> Result<SearchOutcome> {
    run_evolution(ctx, config, None, None)
}

/// Best-of-n baseline: sample `n` responses, keep the best, no evolution.
pub fn run_best_of_n(ctx: &SearchContext, n: u32) -> Result<SearchOutcome> {
    if n == 0 {
        return Err(Error::invalid("baseline.n", "must be at least 1"));
    }
    let mut anchor = AnchorState::new(ctx);
    let mut state = EvolutionState {
        history: HistoryBuffer::new(&ctx.prompt.id),
        eligible: Vec::new(),
        lineage: Vec::new(),
        population: Vec::new(),
        trace: Vec::new(),
        log: Vec::new(),
    };
    init_population(ctx, n, &mut anchor, &mut state)?;
    push_generation_record(ctx, &mut state, None, None, 0)?;
    let best = state
        .history
        .best_among(state.eligible.iter().copied())?
        .id;
    Ok(SearchOutcome {
        best,
        lineage: state.lineage,
        trace: state.trace,
        stopped_by: StopReason::Completed,
        history: state.history,
        log: state.log,
    })
}
