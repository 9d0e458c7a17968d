//! Reward signals: scalar functions, anchored pairwise scoring, and the
//! composite task/confidence blend.
//!
//! Everything is normalized to maximization. Evaluations are cached per
//! (prompt id, candidate text) so duplicate offspring are scored once, and
//! each cache miss reserves one reward-evaluation budget unit before the
//! underlying function is called.

pub mod http;
pub mod synthetic;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::types::Prompt;

/// A scalar reward `r(x, y)`.
pub trait RewardFn: Send + Sync {
    fn evaluate(&self, prompt: &Prompt, text: &str) -> Result<f64>;

    /// Batch hook so remote backends can score many candidates in one call.
    fn evaluate_batch(&self, prompt: &Prompt, texts: &[&str]) -> Result<Vec<f64>> {
        texts.iter().map(|t| self.evaluate(prompt, t)).collect()
    }

    /// Whether larger raw values mean better responses. When false, values
    /// are negated before use.
    fn higher_is_better(&self) -> bool {
        true
    }
}

/// A pairwise preference model: higher output means `candidate` is preferred
/// over `reference`. Antisymmetry is not assumed.
pub trait PairwiseJudge: Send + Sync {
    fn compare(&self, prompt: &Prompt, candidate: &str, reference: &str) -> Result<f64>;

    fn compare_batch(
        &self,
        prompt: &Prompt,
        candidates: &[&str],
        reference: &str,
    ) -> Result<Vec<f64>> {
        candidates
            .iter()
            .map(|c| self.compare(prompt, c, reference))
            .collect()
    }

    /// Set-relative scalar scores for a whole response set: each candidate's
    /// mean preference margin against every other member.
    fn rerank(&self, prompt: &Prompt, texts: &[&str]) -> Result<Vec<f64>> {
        if texts.len() < 2 {
            return Ok(vec![0.0; texts.len()]);
        }
        let mut scores = Vec::with_capacity(texts.len());
        for (i, candidate) in texts.iter().enumerate() {
            let mut sum = 0.0;
            for (j, other) in texts.iter().enumerate() {
                if i != j {
                    sum += self.compare(prompt, candidate, other)?;
                }
            }
            scores.push(sum / (texts.len() - 1) as f64);
        }
        Ok(scores)
    }
}

/// Composite reward: `alpha * task_reward + (1 - alpha) * logprob`.
pub fn composite(task_reward: f64, logprob: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(Error::invalid("alpha", format!("must be in [0, 1], got {alpha}")));
    }
    if !task_reward.is_finite() {
        return Err(Error::NonFiniteReward { value: task_reward });
    }
    if !logprob.is_finite() {
        return Err(Error::NonFiniteReward { value: logprob });
    }
    Ok(alpha * task_reward + (1.0 - alpha) * logprob)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Scalar,
    AnchoredPairwise,
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnchorPolicy {
    #[default]
    None,
    FixedInitial,
}

/// Selects one of the built-in scalar reward functions, or a remote endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalarFnSpec {
    /// Negative edit distance to a hidden target string.
    NegLevenshtein { target: String },
    /// 0 inside the whitespace-token-count band, minus the distance outside.
    TokenBand { min: usize, max: usize },
    /// Seeded hash of the text mapped to [0, 1); rugged and multi-modal.
    Rugged { seed: u64 },
    Http {
        url: String,
        #[serde(default = "default_true")]
        higher_is_better: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JudgeSpec {
    /// compare(a, b) = chars(a) - chars(b).
    LengthDiff,
    /// compare(a, b) = f(a) - f(b) for a scalar function f.
    ScalarMargin { function: Box<ScalarFnSpec> },
    Http { url: String },
}

/// Reward configuration as it appears in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub kind: RewardKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub anchor_policy: AnchorPolicy,
    #[serde(default)]
    pub function: Option<ScalarFnSpec>,
    #[serde(default)]
    pub judge: Option<JudgeSpec>,
}

impl RewardSpec {
    pub fn scalar(function: ScalarFnSpec) -> Self {
        RewardSpec {
            kind: RewardKind::Scalar,
            alpha: None,
            anchor_policy: AnchorPolicy::None,
            function: Some(function),
            judge: None,
        }
    }

    pub fn anchored(judge: JudgeSpec) -> Self {
        RewardSpec {
            kind: RewardKind::AnchoredPairwise,
            alpha: None,
            anchor_policy: AnchorPolicy::FixedInitial,
            function: None,
            judge: None,
        }
        .with_judge(judge)
    }

    fn with_judge(mut self, judge: JudgeSpec) -> Self {
        self.judge = Some(judge);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            RewardKind::Composite => {
                let alpha = self
                    .alpha
                    .ok_or_else(|| Error::invalid("reward.alpha", "required for composite kind"))?;
                if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
                    return Err(Error::invalid(
                        "reward.alpha",
                        format!("must be in [0, 1], got {alpha}"),
                    ));
                }
            }
            _ => {
                if self.alpha.is_some() {
                    return Err(Error::invalid(
                        "reward.alpha",
                        "only valid for composite kind",
                    ));
                }
            }
        }
        match self.kind {
            RewardKind::AnchoredPairwise => {
                if self.anchor_policy != AnchorPolicy::FixedInitial {
                    return Err(Error::invalid(
                        "reward.anchor_policy",
                        "anchored_pairwise requires fixed_initial",
                    ));
                }
                if self.judge.is_none() {
                    return Err(Error::invalid("reward.judge", "required for anchored_pairwise"));
                }
                if self.function.is_some() {
                    return Err(Error::invalid(
                        "reward.function",
                        "not valid for anchored_pairwise",
                    ));
                }
            }
            _ => {
                if self.anchor_policy != AnchorPolicy::None {
                    return Err(Error::invalid(
                        "reward.anchor_policy",
                        "fixed_initial is only valid for anchored_pairwise",
                    ));
                }
                if self.function.is_none() {
                    return Err(Error::invalid("reward.function", "required for this kind"));
                }
                if self.judge.is_some() {
                    return Err(Error::invalid(
                        "reward.judge",
                        "only valid for anchored_pairwise",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<RewardMode> {
        self.validate()?;
        let build_fn = |spec: &ScalarFnSpec| -> Result<Arc<dyn RewardFn>> {
            Ok(match spec {
                ScalarFnSpec::NegLevenshtein { target } => {
                    Arc::new(synthetic::NegLevenshtein::new(target.clone()))
                }
                ScalarFnSpec::TokenBand { min, max } => {
                    Arc::new(synthetic::TokenBand::new(*min, *max)?)
                }
                ScalarFnSpec::Rugged { seed } => Arc::new(synthetic::SeededRugged::new(*seed)),
                ScalarFnSpec::Http {
                    url,
                    higher_is_better,
                } => Arc::new(http::HttpReward::new(url.clone(), *higher_is_better)),
            })
        };
        Ok(match self.kind {
            RewardKind::Scalar => RewardMode::Scalar(build_fn(self.function.as_ref().unwrap())?),
            RewardKind::Composite => RewardMode::Composite {
                task: build_fn(self.function.as_ref().unwrap())?,
                alpha: self.alpha.unwrap(),
            },
            RewardKind::AnchoredPairwise => {
                let judge: Arc<dyn PairwiseJudge> = match self.judge.as_ref().unwrap() {
                    JudgeSpec::LengthDiff => Arc::new(synthetic::LengthDiffJudge),
                    JudgeSpec::ScalarMargin { function } => {
                        Arc::new(synthetic::ScalarMarginJudge::new(build_fn(function)?))
                    }
                    JudgeSpec::Http { url } => Arc::new(http::HttpReward::new(url.clone(), true)),
                };
                RewardMode::Anchored { judge }
            }
        })
    }
}

/// A built reward path.
#[derive(Clone)]
pub enum RewardMode {
    Scalar(Arc<dyn RewardFn>),
    Composite { task: Arc<dyn RewardFn>, alpha: f64 },
    Anchored { judge: Arc<dyn PairwiseJudge> },
}

impl RewardMode {
    pub fn requires_anchor(&self) -> bool {
        matches!(self, RewardMode::Anchored { .. })
    }

    pub fn requires_logprobs(&self) -> bool {
        matches!(self, RewardMode::Composite { .. })
    }
}

type CacheKey = (String, Option<String>);

/// Budgeted, caching reward evaluator for one run.
pub struct Scorer {
    mode: RewardMode,
    budget: Arc<Budget>,
    cache: Mutex<HashMap<CacheKey, f64>>,
}

impl Scorer {
    pub fn new(mode: RewardMode, budget: Arc<Budget>) -> Self {
        Scorer {
            mode,
            budget,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn mode(&self) -> &RewardMode {
        &self.mode
    }

    /// Score `texts`, consuming one reward-eval unit per cache miss.
    ///
    /// `logprobs` must be provided (one per text) in composite mode for texts
    /// not already cached; `anchor` must be provided in anchored mode.
    pub fn score_texts(
        &self,
        prompt: &Prompt,
        texts: &[String],
        logprobs: Option<&[f64]>,
        anchor: Option<&str>,
    ) -> Result<Vec<f64>> {
        let anchor_key = match (&self.mode, anchor) {
            (RewardMode::Anchored { .. }, Some(a)) => Some(a.to_string()),
            (RewardMode::Anchored { .. }, None) => {
                return Err(Error::invalid("anchor", "anchored scoring requires an anchor text"));
            }
            _ => None,
        };

        let mut results: Vec<Option<f64>> = vec![None; texts.len()];
        let mut miss_indices: Vec<usize> = Vec::new();
        {
            let cache = self.cache.lock().expect("reward cache poisoned");
            let mut seen_misses: HashMap<&str, ()> = HashMap::new();
            for (i, text) in texts.iter().enumerate() {
                if text.is_empty() {
                    return Err(Error::invalid("text", "cannot score empty text"));
                }
                if let Some(v) = cache.get(&(text.clone(), anchor_key.clone())) {
                    results[i] = Some(*v);
                } else if seen_misses.insert(text.as_str(), ()).is_none() {
                    miss_indices.push(i);
                }
            }
        }

        if !miss_indices.is_empty() {
            self.budget
                .try_consume_reward_evals(miss_indices.len() as u64)?;
            let miss_texts: Vec<&str> = miss_indices.iter().map(|&i| texts[i].as_str()).collect();
            let raw = match &self.mode {
                RewardMode::Scalar(f) => {
                    let mut values = f.evaluate_batch(prompt, &miss_texts)?;
                    if !f.higher_is_better() {
                        for v in &mut values {
                            *v = -*v;
                        }
                    }
                    values
                }
                RewardMode::Composite { task, alpha } => {
                    let logprobs = logprobs.ok_or_else(|| {
                        Error::invalid("logprobs", "composite reward requires generator logprobs")
                    })?;
                    if logprobs.len() != texts.len() {
                        return Err(Error::invalid(
                            "logprobs",
                            format!("got {} values for {} texts", logprobs.len(), texts.len()),
                        ));
                    }
                    let mut task_values = task.evaluate_batch(prompt, &miss_texts)?;
                    if !task.higher_is_better() {
                        for v in &mut task_values {
                            *v = -*v;
                        }
                    }
                    miss_indices
                        .iter()
                        .zip(task_values)
                        .map(|(&i, t)| composite(t, logprobs[i], *alpha))
                        .collect::<Result<Vec<_>>>()?
                }
                RewardMode::Anchored { judge } => {
                    judge.compare_batch(prompt, &miss_texts, anchor.unwrap())?
                }
            };
            if raw.len() != miss_indices.len() {
                return Err(Error::invalid(
                    "reward backend",
                    format!("returned {} scores for {} texts", raw.len(), miss_indices.len()),
                ));
            }
            let mut cache = self.cache.lock().expect("reward cache poisoned");
            for (&i, value) in miss_indices.iter().zip(&raw) {
                if !value.is_finite() {
                    return Err(Error::NonFiniteReward { value: *value });
                }
                cache.insert((texts[i].clone(), anchor_key.clone()), *value);
            }
            drop(cache);
            // Duplicate texts within the batch resolve through the cache.
            let cache = self.cache.lock().expect("reward cache poisoned");
            for (i, text) in texts.iter().enumerate() {
                if results[i].is_none() {
                    results[i] = cache.get(&(text.clone(), anchor_key.clone())).copied();
                }
            }
        }

        results
            .into_iter()
            .map(|v| v.ok_or_else(|| Error::invalid("reward backend", "missing score")))
            .collect()
    }

    pub fn score_one(
        &self,
        prompt: &Prompt,
        text: &str,
        logprob: Option<f64>,
        anchor: Option<&str>,
    ) -> Result<f64> {
        let values = self.score_texts(
            prompt,
            std::slice::from_ref(&text.to_string()),
            logprob.map(|l| vec![l]).as_deref(),
            anchor,
        )?;
        Ok(values[0])
    }
}
