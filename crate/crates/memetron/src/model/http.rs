//! OpenAI-compatible chat completions backend.
//!
//! Sends `POST {base_url}/v1/chat/completions` with the prompt as a single
//! user message. Transient failures (transport errors, 429, 5xx) are retried
//! with exponential backoff up to the configured cap. The bearer token comes
//! from the `MEMETRON_API_KEY` environment variable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{with_retries, Attempt, RetryPolicy};

use super::{Generator, GeneratorRequest, GeneratorResponse};

pub const API_KEY_ENV: &str = "MEMETRON_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    /// Endpoints that do not advertise min-p support get the field dropped
    /// with a logged warning instead of failing the run.
    #[serde(default)]
    pub supports_min_p: bool,
    #[serde(default = "default_true")]
    pub supports_top_k: bool,
    #[serde(default)]
    pub request_logprobs: bool,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Upper bound on simultaneous in-flight requests across all workers.
    #[serde(default = "HttpBackendConfig::default_max_in_flight")]
    pub max_in_flight: u32,
}

fn default_true() -> bool {
    true
}

impl HttpBackendConfig {
    fn default_max_in_flight() -> u32 {
        8
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_url.is_empty() {
            return Err(Error::invalid("backend.base_url", "must be non-empty"));
        }
        if self.model.is_empty() {
            return Err(Error::invalid("backend.model", "must be non-empty"));
        }
        if self.max_in_flight == 0 {
            return Err(Error::invalid("backend.max_in_flight", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatCompletionRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_p: Option<f64>,
    max_tokens: u32,
    n: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<bool>,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    index: Option<u32>,
    message: ResponseMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

/// Counting semaphore bounding in-flight requests.
struct InFlightGate {
    state: std::sync::Mutex<u32>,
    available: std::sync::Condvar,
}

impl InFlightGate {
    fn new(limit: u32) -> Self {
        InFlightGate {
            state: std::sync::Mutex::new(limit),
            available: std::sync::Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightPermit<'_> {
        let mut slots = self.state.lock().expect("gate poisoned");
        while *slots == 0 {
            slots = self.available.wait(slots).expect("gate poisoned");
        }
        *slots -= 1;
        InFlightPermit { gate: self }
    }
}

struct InFlightPermit<'a> {
    gate: &'a InFlightGate,
}

impl Drop for InFlightPermit<'_> {
    fn drop(&mut self) {
        let mut slots = self.gate.state.lock().expect("gate poisoned");
        *slots += 1;
        self.gate.available.notify_one();
    }
}

pub struct HttpGenerator {
    config: HttpBackendConfig,
    agent: ureq::Agent,
    gate: InFlightGate,
}

impl HttpGenerator {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        config.validate()?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(config.retry.timeout_secs)))
            .http_status_as_error(false)
            .build();
        let gate = InFlightGate::new(config.max_in_flight);
        Ok(HttpGenerator {
            config,
            agent: agent_config.into(),
            gate,
        })
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.config.base_url.trim_end_matches('/'))
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse> {
        request.validate()?;
        if request.params.min_p > 0.0 && !self.config.supports_min_p {
            log::warn!(
                "endpoint does not support min_p; dropping min_p={}",
                request.params.min_p
            );
        }
        let token = std::env::var(API_KEY_ENV).ok();
        let body = ChatCompletionRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &request.prompt_text,
            }],
            temperature: request.params.temperature,
            top_p: request.params.top_p,
            top_k: (self.config.supports_top_k && request.params.top_k > 0)
                .then_some(request.params.top_k),
            min_p: self.config.supports_min_p.then_some(request.params.min_p),
            max_tokens: request.params.max_tokens,
            n: request.n,
            seed: request.params.seed,
            logprobs: self.config.request_logprobs.then_some(true),
        };

        let _permit = self.gate.acquire();
        let parsed: ChatCompletionResponse = with_retries(&self.config.retry, || {
            let mut req = self.agent.post(&self.endpoint());
            if let Some(token) = &token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            match req.send_json(&body) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    if status == 429 || status >= 500 {
                        return Attempt::Transient {
                            rate_limited: status == 429,
                            message: format!("endpoint returned {status}"),
                        };
                    }
                    if !(200..300).contains(&status) {
                        return Attempt::Fatal(Error::Transport {
                            attempts: 1,
                            message: format!("endpoint returned {status}"),
                        });
                    }
                    match response.body_mut().read_json::<ChatCompletionResponse>() {
                        Ok(parsed) => Attempt::Ok(parsed),
                        Err(e) => Attempt::Fatal(Error::Transport {
                            attempts: 1,
                            message: format!("bad completion body: {e}"),
                        }),
                    }
                }
                Err(e) => Attempt::Transient {
                    rate_limited: false,
                    message: e.to_string(),
                },
            }
        })?;

        if parsed.choices.len() != request.n as usize {
            return Err(Error::Transport {
                attempts: 1,
                message: format!(
                    "endpoint returned {} choices for n={}",
                    parsed.choices.len(),
                    request.n
                ),
            });
        }
        // Order by choice index when provided; otherwise keep wire order.
        let mut choices = parsed.choices;
        choices.sort_by_key(|c| c.index.unwrap_or(0));

        let mut texts = Vec::with_capacity(choices.len());
        let mut logprobs = Vec::with_capacity(choices.len());
        let mut have_all_logprobs = self.config.request_logprobs;
        for choice in choices {
            texts.push(choice.message.content.unwrap_or_default());
            match choice.logprobs.and_then(|l| l.content) {
                Some(tokens) => logprobs.push(tokens.iter().map(|t| t.logprob).sum()),
                None => have_all_logprobs = false,
            }
        }
        Ok(GeneratorResponse {
            texts,
            logprobs: have_all_logprobs.then_some(logprobs),
            model_calls_consumed: request.n,
        })
    }
}
