//! Remote reward endpoint client.
//!
//! Protocol: `POST <url>` with body
//! `{"prompt": str, "candidates": [str], "anchor": str|null}`, response
//! `{"scores": [float]}` with one score per candidate. A null anchor asks the
//! endpoint for standalone (or set-relative) scores; a non-null anchor asks
//! for preference scores of each candidate against the anchor. The bearer
//! token is read from the `MEMETRON_REWARD_TOKEN` environment variable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{with_retries, Attempt, RetryPolicy};
use crate::types::Prompt;

use super::{PairwiseJudge, RewardFn};

pub const REWARD_TOKEN_ENV: &str = "MEMETRON_REWARD_TOKEN";

#[derive(Serialize)]
struct ScoreRequest<'a> {
    prompt: &'a str,
    candidates: &'a [&'a str],
    anchor: Option<&'a str>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

pub struct HttpReward {
    url: String,
    higher_is_better: bool,
    policy: RetryPolicy,
    agent: ureq::Agent,
}

impl HttpReward {
    pub fn new(url: String, higher_is_better: bool) -> Self {
        Self::with_policy(url, higher_is_better, RetryPolicy::default())
    }

    pub fn with_policy(url: String, higher_is_better: bool, policy: RetryPolicy) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(policy.timeout_secs)))
            .http_status_as_error(false)
            .build();
        HttpReward {
            url,
            higher_is_better,
            policy,
            agent: config.into(),
        }
    }

    fn post_scores(&self, prompt: &Prompt, texts: &[&str], anchor: Option<&str>) -> Result<Vec<f64>> {
        let token = std::env::var(REWARD_TOKEN_ENV).ok();
        let expected = texts.len();
        let scores = with_retries(&self.policy, || {
            let body = ScoreRequest {
                prompt: &prompt.text,
                candidates: texts,
                anchor,
            };
            let mut request = self.agent.post(&self.url);
            if let Some(token) = &token {
                request = request.header("Authorization", &format!("Bearer {token}"));
            }
            match request.send_json(&body) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if status == 429 || status >= 500 {
                        return Attempt::Transient {
                            rate_limited: status == 429,
                            message: format!("reward endpoint returned {status}"),
                        };
                    }
                    if !(200..300).contains(&status) {
                        return Attempt::Fatal(Error::Transport {
                            attempts: 1,
                            message: format!("reward endpoint returned {status}"),
                        });
                    }
                    match response.body_mut().read_json::<ScoreResponse>() {
                        Ok(parsed) => Attempt::Ok(parsed.scores),
                        Err(e) => Attempt::Fatal(Error::Transport {
                            attempts: 1,
                            message: format!("bad reward response body: {e}"),
                        }),
                    }
                }
                Err(e) => Attempt::Transient {
                    rate_limited: false,
                    message: e.to_string(),
                },
            }
        })?;
        if scores.len() != expected {
            return Err(Error::Transport {
                attempts: 1,
                message: format!("reward endpoint returned {} scores for {expected} candidates", scores.len()),
            });
        }
        Ok(scores)
    }
}

impl RewardFn for HttpReward {
    fn evaluate(&self, prompt: &Prompt, text: &str) -> Result<f64> {
        Ok(self.evaluate_batch(prompt, &[text])?[0])
    }

    fn evaluate_batch(&self, prompt: &Prompt, texts: &[&str]) -> Result<Vec<f64>> {
        self.post_scores(prompt, texts, None)
    }

    fn higher_is_better(&self) -> bool {
        self.higher_is_better
    }
}

impl PairwiseJudge for HttpReward {
    fn compare(&self, prompt: &Prompt, candidate: &str, reference: &str) -> Result<f64> {
        Ok(self.compare_batch(prompt, &[candidate], reference)?[0])
    }

    fn compare_batch(
        &self,
        prompt: &Prompt,
        candidates: &[&str],
        reference: &str,
    ) -> Result<Vec<f64>> {
        self.post_scores(prompt, candidates, Some(reference))
    }

    /// One call with a null anchor: the endpoint scores the set jointly.
    fn rerank(&self, prompt: &Prompt, texts: &[&str]) -> Result<Vec<f64>> {
        self.post_scores(prompt, texts, None)
    }
}
