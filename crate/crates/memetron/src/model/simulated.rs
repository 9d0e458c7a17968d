//! Deterministic simulated generator for fully offline runs.
//!
//! The backend classifies each prompt by its sentinel markers and answers
//! from a documented PRNG stream (see [`crate::rng`]):
//!
//! * **plain** — `length` characters drawn uniformly from `alphabet`;
//! * **fusion** — a prefix–suffix splice of the two embedded parents plus up
//!   to `max_point_edits` point edits;
//! * **refinement** — the embedded response with exactly one point edit.
//!
//! Sample `i` of a request with seed `s` draws from the stream
//! `child_seed(s, Sample, i)` (requests without a seed use seed 0). Each
//! character index is `next_u32() % len`. A fusion splice point is
//! `next_u32() % (chars(parent_1) + 1)`; each of the `max_point_edits` edit
//! slots then fires when `(next_u64() >> 11) * 2^-53 < p_edit`, drawing a
//! position and a replacement character. The edit probability is
//! `max(min_p, 1 - exp(-temperature / 2))`, so hotter sampling mutates more
//! and `min_p` acts as the floor. A refinement edit draws a position and then
//! replacement characters until one differs from the original.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::{extract_between, Sentinels};
use crate::rng::{index, stream_for, unit_f64, StreamTag};

use super::{Generator, GeneratorRequest, GeneratorResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedConfig {
    /// Characters candidate texts are built from; at least two.
    pub alphabet: Vec<char>,
    /// Length of plain samples, in characters.
    pub length: usize,
    /// Edit slots applied after a fusion splice.
    #[serde(default = "SimulatedConfig::default_max_point_edits")]
    pub max_point_edits: u32,
    #[serde(default)]
    pub sentinels: Option<Sentinels>,
}

impl SimulatedConfig {
    fn default_max_point_edits() -> u32 {
        2
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet.len() < 2 {
            return Err(Error::invalid(
                "simulated.alphabet",
                "needs at least two characters",
            ));
        }
        if self.length == 0 {
            return Err(Error::invalid("simulated.length", "must be positive"));
        }
        Ok(())
    }
}

impl Default for SimulatedConfig {
    fn default() -> Self {
        SimulatedConfig {
            alphabet: vec!['0', '1'],
            length: 8,
            max_point_edits: Self::default_max_point_edits(),
            sentinels: None,
        }
    }
}

pub struct SimulatedGenerator {
    config: SimulatedConfig,
    sentinels: Sentinels,
}

enum PromptShape {
    Plain,
    Fusion { parent_a: String, parent_b: String },
    Refinement { current: String },
}

impl SimulatedGenerator {
    pub fn new(config: SimulatedConfig) -> Result<Self> {
        config.validate()?;
        let sentinels = config.sentinels.clone().unwrap_or_default();
        Ok(SimulatedGenerator { config, sentinels })
    }

    fn classify(&self, prompt: &str) -> Result<PromptShape> {
        let s = &self.sentinels;
        if prompt.contains(&s.begin_response_1) {
            let parent_a = extract_between(prompt, &s.begin_response_1, &s.end_response_1)
                .ok_or_else(|| Error::Template("fusion prompt has unterminated response 1".into()))?;
            let parent_b = extract_between(prompt, &s.begin_response_2, &s.end_response_2)
                .ok_or_else(|| Error::Template("fusion prompt has no extractable response 2".into()))?;
            return Ok(PromptShape::Fusion {
                parent_a: parent_a.to_string(),
                parent_b: parent_b.to_string(),
            });
        }
        if prompt.contains(&s.begin_response) {
            let current = extract_between(prompt, &s.begin_response, &s.end_response)
                .ok_or_else(|| Error::Template("refinement prompt has no extractable response".into()))?;
            return Ok(PromptShape::Refinement {
                current: current.to_string(),
            });
        }
        Ok(PromptShape::Plain)
    }

    fn edit_probability(&self, temperature: f64, min_p: f64) -> f64 {
        (1.0 - (-temperature / 2.0).exp()).max(min_p)
    }

    fn sample(
        &self,
        shape: &PromptShape,
        request: &GeneratorRequest,
        sample_index: u64,
    ) -> Result<String> {
        let seed = request.params.seed.unwrap_or(0);
        let mut rng = stream_for(seed, StreamTag::Sample, sample_index);
        let alphabet = &self.config.alphabet;
        match shape {
            PromptShape::Plain => Ok((0..self.config.length)
                .map(|_| alphabet[index(&mut rng, alphabet.len())])
                .collect()),
            PromptShape::Fusion { parent_a, parent_b } => {
                let a: Vec<char> = parent_a.chars().collect();
                let b: Vec<char> = parent_b.chars().collect();
                if a.is_empty() || b.is_empty() {
                    return Err(Error::Template("fusion parents must be non-empty".into()));
                }
                let split = index(&mut rng, a.len() + 1);
                let mut child: Vec<char> = a[..split].to_vec();
                child.extend_from_slice(&b[split.min(b.len())..]);
                if child.is_empty() {
                    child.push(alphabet[index(&mut rng, alphabet.len())]);
                }
                let p_edit =
                    self.edit_probability(request.params.temperature, request.params.min_p);
                for _ in 0..self.config.max_point_edits {
                    if unit_f64(&mut rng) < p_edit {
                        let at = index(&mut rng, child.len());
                        child[at] = alphabet[index(&mut rng, alphabet.len())];
                    }
                }
                Ok(child.into_iter().collect())
            }
            PromptShape::Refinement { current } => {
                let mut chars: Vec<char> = current.chars().collect();
                if chars.is_empty() {
                    return Err(Error::Template("refinement source must be non-empty".into()));
                }
                let at = index(&mut rng, chars.len());
                let original = chars[at];
                // Rejection sampling; terminates because the alphabet has at
                // least two characters.
                loop {
                    let replacement = alphabet[index(&mut rng, alphabet.len())];
                    if replacement != original {
                        chars[at] = replacement;
                        break;
                    }
                }
                Ok(chars.into_iter().collect())
            }
        }
    }
}

impl Generator for SimulatedGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse> {
        request.validate()?;
        let shape = self.classify(&request.prompt_text)?;
        let mut texts = Vec::with_capacity(request.n as usize);
        let mut logprobs = Vec::with_capacity(request.n as usize);
        let uniform_lp = -(self.config.alphabet.len() as f64).ln();
        for i in 0..request.n {
            let text = self.sample(&shape, request, u64::from(i))?;
            // Surrogate log-probability of a uniform character model.
            logprobs.push(uniform_lp * text.chars().count() as f64);
            texts.push(text);
        }
        Ok(GeneratorResponse {
            texts,
            logprobs: Some(logprobs),
            model_calls_consumed: request.n,
        })
    }
}
