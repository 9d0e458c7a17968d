//! Built-in synthetic rewards and judges.
//!
//! These exist so search and acceptance tests run fully offline: an edit
//! distance oracle with a hidden target, a token-count band, a seeded rugged
//! landscape, and two pairwise judges over scalar margins.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::{fnv1a64, splitmix64};
use crate::types::Prompt;

use super::{PairwiseJudge, RewardFn};

/// Character-level Levenshtein distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut current = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        current[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            current[j + 1] = substitution.min(prev[j + 1] + 1).min(current[j] + 1);
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

/// Negative edit distance to a hidden target; 0 is a perfect match.
#[derive(Debug, Clone)]
pub struct NegLevenshtein {
    target: String,
}

impl NegLevenshtein {
    pub fn new(target: impl Into<String>) -> Self {
        NegLevenshtein {
            target: target.into(),
        }
    }
}

impl RewardFn for NegLevenshtein {
    fn evaluate(&self, _prompt: &Prompt, text: &str) -> Result<f64> {
        Ok(0.0 - levenshtein(text, &self.target) as f64)
    }
}

/// Zero inside the whitespace-token-count band `[min, max]`, minus the
/// distance to the band outside it.
#[derive(Debug, Clone)]
pub struct TokenBand {
    min: usize,
    max: usize,
}

impl TokenBand {
    pub fn new(min: usize, max: usize) -> Result<Self> {
        if min > max {
            return Err(Error::invalid(
                "token_band",
                format!("min {min} exceeds max {max}"),
            ));
        }
        Ok(TokenBand { min, max })
    }
}

impl RewardFn for TokenBand {
    fn evaluate(&self, _prompt: &Prompt, text: &str) -> Result<f64> {
        let count = text.split_whitespace().count();
        let distance = self
            .min
            .saturating_sub(count)
            .max(count.saturating_sub(self.max));
        Ok(0.0 - distance as f64)
    }
}

/// Seeded hash of the text mapped to [0, 1). Neighbouring texts get unrelated
/// values, which makes the landscape rugged and multi-modal.
#[derive(Debug, Clone)]
pub struct SeededRugged {
    seed: u64,
}

impl SeededRugged {
    pub fn new(seed: u64) -> Self {
        SeededRugged { seed }
    }
}

impl RewardFn for SeededRugged {
    fn evaluate(&self, _prompt: &Prompt, text: &str) -> Result<f64> {
        let h = splitmix64(fnv1a64(text) ^ self.seed);
        Ok((h >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
    }
}

/// compare(a, b) = chars(a) - chars(b).
#[derive(Debug, Clone, Copy)]
pub struct LengthDiffJudge;

impl PairwiseJudge for LengthDiffJudge {
    fn compare(&self, _prompt: &Prompt, candidate: &str, reference: &str) -> Result<f64> {
        Ok(candidate.chars().count() as f64 - reference.chars().count() as f64)
    }
}

/// compare(a, b) = f(a) - f(b) for a scalar reward f. Makes any scalar reward
/// usable through the pairwise interface with consistent argmax behaviour.
pub struct ScalarMarginJudge {
    inner: Arc<dyn RewardFn>,
}

impl ScalarMarginJudge {
    pub fn new(inner: Arc<dyn RewardFn>) -> Self {
        ScalarMarginJudge { inner }
    }
}

impl PairwiseJudge for ScalarMarginJudge {
    fn compare(&self, prompt: &Prompt, candidate: &str, reference: &str) -> Result<f64> {
        Ok(self.inner.evaluate(prompt, candidate)? - self.inner.evaluate(prompt, reference)?)
    }
}
