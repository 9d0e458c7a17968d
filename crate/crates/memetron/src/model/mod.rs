//! Text generator abstraction: an OpenAI-compatible HTTP backend and a
//! deterministic simulated backend for offline runs.

pub mod http;
pub mod simulated;

use std::sync::Arc;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::rng::{child_seed, StreamTag};
use crate::types::SamplingParams;

/// A request for `n` completions of one prompt.
#[derive(Debug, Clone)]
pub struct GeneratorRequest {
    pub prompt_text: String,
    pub params: SamplingParams,
    pub n: u32,
}

impl GeneratorRequest {
    pub fn new(prompt_text: impl Into<String>, params: SamplingParams, n: u32) -> Result<Self> {
        let request = GeneratorRequest {
            prompt_text: prompt_text.into(),
            params,
            n,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("request.n", "must be at least 1"));
        }
        if self.prompt_text.is_empty() {
            return Err(Error::invalid("request.prompt_text", "must be non-empty"));
        }
        self.params.validate()
    }
}

/// Completions in stable, index-addressable order.
#[derive(Debug, Clone)]
pub struct GeneratorResponse {
    pub texts: Vec<String>,
    pub logprobs: Option<Vec<f64>>,
    pub model_calls_consumed: u32,
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse>;
}

/// Budget-enforcing front of a generator.
///
/// Reserves `n` model calls before the backend is invoked. Completions that
/// come back empty after trimming are re-drawn once (reserving one extra call
/// each) before surfacing an error with the offending index.
pub struct BudgetedGenerator {
    inner: Arc<dyn Generator>,
    budget: Arc<Budget>,
}

impl BudgetedGenerator {
    pub fn new(inner: Arc<dyn Generator>, budget: Arc<Budget>) -> Self {
        BudgetedGenerator { inner, budget }
    }

    pub fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse> {
        request.validate()?;
        self.budget.try_consume_model_calls(u64::from(request.n))?;
        let mut response = self.inner.generate(request)?;
        if response.texts.len() != request.n as usize {
            return Err(Error::Transport {
                attempts: 1,
                message: format!(
                    "backend returned {} completions for n={}",
                    response.texts.len(),
                    request.n
                ),
            });
        }

        let empty: Vec<usize> = response
            .texts
            .iter()
            .enumerate()
            .filter(|(_, t)| t.trim().is_empty())
            .map(|(i, _)| i)
            .collect();
        if !empty.is_empty() {
            self.budget.try_consume_model_calls(empty.len() as u64)?;
            let redraw_request = GeneratorRequest {
                prompt_text: request.prompt_text.clone(),
                params: SamplingParams {
                    seed: request
                        .params
                        .seed
                        .map(|s| child_seed(s, StreamTag::Redraw, 0)),
                    ..request.params.clone()
                },
                n: empty.len() as u32,
            };
            let redraw = self.inner.generate(&redraw_request)?;
            for (slot, text) in empty.iter().zip(redraw.texts) {
                if text.trim().is_empty() {
                    return Err(Error::EmptyCompletion { index: *slot });
                }
                response.texts[*slot] = text;
                if let (Some(lps), Some(new_lps)) = (&mut response.logprobs, &redraw.logprobs) {
                    // Redraw batches carry their own logprobs positionally.
                    let redraw_pos = empty.iter().position(|s| s == slot).unwrap();
                    lps[*slot] = new_lps[redraw_pos];
                }
            }
            response.model_calls_consumed += empty.len() as u32;
        }
        Ok(response)
    }

    pub fn budget(&self) -> &Budget {
        &self.budget
    }
}
