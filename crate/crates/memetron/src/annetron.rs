//! Simulated-annealing local search over responses.
//!
//! Each step renders a refinement prompt for the current response, draws
//! best-of-n proposals, and applies the Metropolis criterion: improvements
//! are always kept, worse proposals are kept with probability
//! `exp(delta / T)` under geometric cooling. Accepted candidates form the
//! run's history set; rejected proposals are recorded for analysis but never
//! become the current state and never enter elitism.

use std::collections::HashMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genetron::converged;
use crate::history::HistoryBuffer;
use crate::model::GeneratorRequest;
use crate::prompts::render_refine;
use crate::rng::{child_seed, stream_for, unit_f64, StreamTag};
use crate::search::{LogRecord, SearchContext, SearchOutcome, StepRecord, StopReason};
use crate::types::{CandidateId, NewCandidate, Origin, SamplingParams, TemperatureSchedule};

/// How proposals are scored during refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    #[default]
    DirectReward,
    /// Score every proposal against the run's fixed anchor (the pre-annealing
    /// response), never replacing the anchor mid-run.
    Anchored,
}

/// Optional affine coupling of the generator's sampling temperature to the
/// annealing temperature. Enabled by default with identity mapping, matching
/// a sampling schedule that decays geometrically across steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureCoupling {
    pub coupled: bool,
    pub scale: f64,
    pub offset: f64,
}

impl Default for TemperatureCoupling {
    fn default() -> Self {
        TemperatureCoupling {
            coupled: true,
            scale: 1.0,
            offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnetronConfig {
    /// Refinement step limit. Zero makes the run a no-op (useful to reduce
    /// the hybrid to its purely evolutionary form).
    pub steps: u32,
    pub patience: u32,
    pub best_of_n: u32,
    #[serde(default)]
    pub schedule: TemperatureSchedule,
    /// Patience threshold on the best accepted reward. Zero disables early
    /// stopping, since the best accepted reward never strictly decreases.
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub scoring: ScoringMode,
    #[serde(default)]
    pub coupling: TemperatureCoupling,
}

impl Default for AnnetronConfig {
    /// The evaluation protocol's shape: 7 refinement steps, patience 3,
    /// best-of-3.
    fn default() -> Self {
        AnnetronConfig {
            steps: 7,
            patience: 3,
            best_of_n: 3,
            schedule: TemperatureSchedule::default(),
            delta: 0.0,
            scoring: ScoringMode::DirectReward,
            coupling: TemperatureCoupling::default(),
        }
    }
}

impl AnnetronConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps > 0 && (self.patience == 0 || self.patience > self.steps) {
            return Err(Error::invalid(
                "annetron.patience",
                format!("must be in 1..=steps ({}), got {}", self.steps, self.patience),
            ));
        }
        if self.best_of_n == 0 {
            return Err(Error::invalid("annetron.best_of_n", "must be at least 1"));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::invalid(
                "annetron.delta",
                format!("must be a non-negative real, got {}", self.delta),
            ));
        }
        if !self.coupling.scale.is_finite() || !self.coupling.offset.is_finite() {
            return Err(Error::invalid("annetron.coupling", "must be finite"));
        }
        self.schedule.validate()
    }
}

/// Metropolis acceptance for maximization: improvements always pass, a worse
/// proposal passes with probability `exp(delta_r / temperature)`.
pub fn metropolis_accept(
    delta_r: f64,
    temperature: f64,
    rng: &mut impl RngCore,
) -> Result<bool> {
    if !delta_r.is_finite() {
        return Err(Error::NonFiniteReward { value: delta_r });
    }
    if !temperature.is_finite() || temperature <= 0.0 {
        return Err(Error::invalid(
            "temperature",
            format!("must be positive, got {temperature}"),
        ));
    }
    if delta_r >= 0.0 {
        return Ok(true);
    }
    Ok(unit_f64(rng) < (delta_r / temperature).exp())
}

/// One cooling step (re-exported convenience over the schedule).
pub fn cool(temperature: f64, schedule: &TemperatureSchedule) -> f64 {
    schedule.cool(temperature)
}

/// Identity of one annealing run within a larger search.
pub struct AnnealSetup {
    /// Candidate the run starts from; must be recorded and scored.
    pub start: CandidateId,
    /// Seed all of this run's streams derive from.
    pub anneal_seed: u64,
    /// Generation index stamped onto refinement candidates.
    pub generation: u32,
    /// Model-call allowance carved out for this run, if any.
    pub call_allowance: Option<u64>,
    /// Log context for hybrid runs.
    pub algorithm: Option<&'static str>,
    pub offspring_slot: Option<u32>,
}

pub struct AnnealOutcome {
    /// Best of accepted candidates and the start, on the run's scoring scale.
    pub best: CandidateId,
    pub accepted: Vec<CandidateId>,
    pub steps_used: u32,
    pub stopped_by: StopReason,
    /// Best accepted score after 0, 1, ... steps.
    pub trace: Vec<f64>,
}

/// Run simulated annealing from an existing candidate, recording proposals
/// into `history` and step records into `log`.
pub fn anneal_from(
    ctx: &SearchContext,
    history: &mut HistoryBuffer,
    config: &AnnetronConfig,
    setup: AnnealSetup,
    log: &mut Vec<LogRecord>,
) -> Result<AnnealOutcome> {
    config.validate()?;
    let start = history
        .get(setup.start)
        .ok_or(Error::DanglingParent { parent: setup.start })?
        .clone();
    let start_reward = start.reward()?;

    if config.steps == 0 {
        return Ok(AnnealOutcome {
            best: start.id,
            accepted: Vec::new(),
            steps_used: 0,
            stopped_by: StopReason::Completed,
            trace: vec![start_reward],
        });
    }

    // The anchor is the pre-annealing response, fixed for the whole run.
    let anchor = match config.scoring {
        ScoringMode::Anchored => Some(start.text.clone()),
        ScoringMode::DirectReward => None,
    };

    // Scores on the run's own scale: the recorded reward in direct mode, the
    // anchored preference score (including the start's self-comparison) in
    // anchored mode.
    let mut run_score: HashMap<CandidateId, f64> = HashMap::new();
    let start_score = match config.scoring {
        ScoringMode::DirectReward => start_reward,
        ScoringMode::Anchored => {
            ctx.scorer
                .score_one(&ctx.prompt, &start.text, None, anchor.as_deref())?
        }
    };
    run_score.insert(start.id, start_score);

    let mut current = start.id;
    let mut current_score = start_score;
    let mut best_id = start.id;
    let mut best_score = start_score;
    let mut accepted = Vec::new();
    let mut trace = vec![start_score];
    let mut temperature = config.schedule.t0;
    let mut allowance = setup.call_allowance;
    let mut stopped_by = StopReason::Completed;
    let mut steps_used = 0;

    for step in 1..=config.steps {
        if converged(&trace, config.patience as usize, config.delta) {
            stopped_by = StopReason::Converged;
            break;
        }
        if let Some(remaining) = allowance {
            if remaining < u64::from(config.best_of_n) {
                stopped_by = StopReason::BudgetExhausted;
                break;
            }
        }

        let current_candidate = history.get(current).expect("current state is recorded");
        let rendered =
            render_refine(&ctx.refine_template, &ctx.prompt, current_candidate, &ctx.render)?;
        let sampling_temperature = if config.coupling.coupled {
            (config.coupling.scale * temperature + config.coupling.offset).max(0.0)
        } else {
            ctx.sampling.temperature
        };
        let request = GeneratorRequest::new(
            rendered,
            SamplingParams {
                temperature: sampling_temperature,
                seed: Some(child_seed(setup.anneal_seed, StreamTag::Refine, u64::from(step))),
                ..ctx.sampling.clone()
            },
            config.best_of_n,
        )?;

        let response = match ctx.generator.generate(&request) {
            Ok(response) => response,
            Err(e) if e.is_budget_exhausted() => {
                stopped_by = StopReason::BudgetExhausted;
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(remaining) = allowance.as_mut() {
            *remaining = remaining.saturating_sub(u64::from(response.model_calls_consumed));
        }

        let scores = match ctx.scorer.score_texts(
            &ctx.prompt,
            &response.texts,
            response.logprobs.as_deref(),
            anchor.as_deref(),
        ) {
            Ok(scores) => scores,
            Err(e) if e.is_budget_exhausted() => {
                stopped_by = StopReason::BudgetExhausted;
                break;
            }
            Err(e) => return Err(e),
        };
        let (win_index, win_score) = argmax(&scores).ok_or(Error::AllSamplesFailed {
            n: config.best_of_n,
        })?;

        let proposal = history.record(NewCandidate {
            text: response.texts[win_index].clone(),
            reward: Some(win_score),
            origin: Origin::Refinement {
                parent: current,
                step,
                sample_index: win_index as u32,
            },
            generation: setup.generation,
            created_at_call: ctx.budget.used_model_calls(),
        })?;
        run_score.insert(proposal, win_score);

        let delta_r = win_score - current_score;
        let mut accept_rng = stream_for(setup.anneal_seed, StreamTag::Accept, u64::from(step));
        let accepted_now = metropolis_accept(delta_r, temperature, &mut accept_rng)?;

        log.push(LogRecord::Step(StepRecord {
            algorithm: setup.algorithm.map(str::to_string),
            phase: setup.algorithm.map(|_| "anneal".to_string()),
            generation: setup.algorithm.map(|_| setup.generation),
            offspring: setup.offspring_slot,
            step,
            temperature,
            proposal_reward: win_score,
            delta: delta_r,
            accepted: accepted_now,
        }));

        if accepted_now {
            current = proposal;
            current_score = win_score;
            accepted.push(proposal);
            if win_score > best_score {
                best_score = win_score;
                best_id = proposal;
            }
        }
        trace.push(best_score);
        temperature = config.schedule.cool(temperature);
        steps_used = step;
    }

    Ok(AnnealOutcome {
        best: best_id,
        accepted,
        steps_used,
        stopped_by,
        trace,
    })
}

/// Full annealing algorithm: sample one initial response, then refine it.
pub fn run_annetron(ctx: &SearchContext, config: &AnnetronConfig) -> Result<SearchOutcome> {
    config.validate()?;
    let mut history = HistoryBuffer::new(&ctx.prompt.id);
    let mut log = Vec::new();

    let generation_seed = child_seed(ctx.seed, StreamTag::Generation, 0);
    let request = GeneratorRequest::new(
        ctx.prompt.text.clone(),
        SamplingParams {
            seed: Some(child_seed(generation_seed, StreamTag::Init, 0)),
            ..ctx.sampling.clone()
        },
        1,
    )?;
    let response = ctx.generator.generate(&request)?;
    // In anchored mode the initial response anchors its own score.
    let anchor_text = match config.scoring {
        ScoringMode::Anchored => Some(response.texts[0].clone()),
        ScoringMode::DirectReward => None,
    };
    let scores = ctx.scorer.score_texts(
        &ctx.prompt,
        &response.texts,
        response.logprobs.as_deref(),
        anchor_text.as_deref(),
    )?;
    let y0 = history.record(NewCandidate {
        text: response.texts[0].clone(),
        reward: Some(scores[0]),
        origin: Origin::Initial,
        generation: 0,
        created_at_call: ctx.budget.used_model_calls(),
    })?;

    let outcome = anneal_from(
        ctx,
        &mut history,
        config,
        AnnealSetup {
            start: y0,
            anneal_seed: child_seed(generation_seed, StreamTag::Anneal, 0),
            generation: 0,
            call_allowance: None,
            algorithm: None,
            offspring_slot: None,
        },
        &mut log,
    )?;

    let mut lineage = vec![y0];
    lineage.extend(outcome.accepted.iter().copied());
    Ok(SearchOutcome {
        best: outcome.best,
        lineage,
        trace: outcome.trace,
        stopped_by: outcome.stopped_by,
        history,
        log,
    })
}

/// Index and value of the maximum score; ties break toward the lowest index.
pub(crate) fn argmax(scores: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &score) in scores.iter().enumerate() {
        match best {
            None => best = Some((i, score)),
            Some((_, current)) if score > current => best = Some((i, score)),
            _ => {}
        }
    }
    best
}
