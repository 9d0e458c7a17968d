//! Wire-level tests of the HTTP generator and reward clients against a
//! scripted in-process HTTP/1.1 server.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use memetron::model::http::{HttpBackendConfig, HttpGenerator};
use memetron::model::{Generator, GeneratorRequest};
use memetron::net::RetryPolicy;
use memetron::reward::http::HttpReward;
use memetron::reward::{PairwiseJudge, RewardFn};
use memetron::types::{Prompt, SamplingParams};

struct Exchange {
    status: u16,
    body: String,
}

struct TestServer {
    base_url: String,
    requests: Arc<Mutex<Vec<serde_json::Value>>>,
    auth_headers: Arc<Mutex<Vec<Option<String>>>>,
}

/// Serve the scripted responses one connection at a time, recording request
/// bodies and Authorization headers.
fn spawn_server(exchanges: Vec<Exchange>) -> TestServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base_url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let auth_headers = Arc::new(Mutex::new(Vec::new()));
    let server_requests = requests.clone();
    let server_auth = auth_headers.clone();
    std::thread::spawn(move || {
        for exchange in exchanges {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buffer = Vec::new();
            let mut chunk = [0u8; 4096];
            let header_end = loop {
                let n = stream.read(&mut chunk).unwrap();
                buffer.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buffer.windows(4).position(|w| w == b"\r\n\r\n") {
                    break pos + 4;
                }
                if n == 0 {
                    return;
                }
            };
            let headers = String::from_utf8_lossy(&buffer[..header_end]).to_string();
            let content_length: usize = headers
                .lines()
                .find_map(|l| {
                    let (name, value) = l.split_once(':')?;
                    name.eq_ignore_ascii_case("content-length")
                        .then(|| value.trim().parse().ok())?
                })
                .unwrap_or(0);
            while buffer.len() < header_end + content_length {
                let n = stream.read(&mut chunk).unwrap();
                if n == 0 {
                    break;
                }
                buffer.extend_from_slice(&chunk[..n]);
            }
            let body = &buffer[header_end..header_end + content_length];
            server_requests
                .lock()
                .unwrap()
                .push(serde_json::from_slice(body).unwrap_or(serde_json::Value::Null));
            server_auth.lock().unwrap().push(headers.lines().find_map(|l| {
                let (name, value) = l.split_once(':')?;
                name.eq_ignore_ascii_case("authorization")
                    .then(|| value.trim().to_string())
            }));
            let response = format!(
                "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                exchange.status,
                exchange.body.len(),
                exchange.body
            );
            stream.write_all(response.as_bytes()).unwrap();
        }
    });
    TestServer {
        base_url,
        requests,
        auth_headers,
    }
}

fn completion_body(texts: &[&str]) -> String {
    let choices: Vec<serde_json::Value> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| {
            serde_json::json!({
                "index": i,
                "message": {"role": "assistant", "content": t},
                "finish_reason": "stop"
            })
        })
        .collect();
    serde_json::json!({
        "id": "cmpl-1",
        "object": "chat.completion",
        "choices": choices
    })
    .to_string()
}

fn backend_config(base_url: &str) -> HttpBackendConfig {
    HttpBackendConfig {
        base_url: base_url.to_string(),
        model: "test-model".into(),
        supports_min_p: false,
        supports_top_k: true,
        request_logprobs: false,
        retry: RetryPolicy {
            max_retries: 2,
            base_backoff_ms: 1,
            timeout_secs: 5,
        },
        max_in_flight: 4,
    }
}

fn request(n: u32) -> GeneratorRequest {
    GeneratorRequest::new(
        "hello",
        SamplingParams {
            seed: Some(99),
            ..SamplingParams::default()
        },
        n,
    )
    .unwrap()
}

#[test]
fn completion_request_carries_standard_fields() {
    std::env::set_var("MEMETRON_API_KEY", "test-key-123");
    let server = spawn_server(vec![Exchange {
        status: 200,
        body: completion_body(&["first", "second"]),
    }]);
    let generator = HttpGenerator::new(backend_config(&server.base_url)).unwrap();
    let response = generator.generate(&request(2)).unwrap();
    assert_eq!(response.texts, vec!["first", "second"]);
    assert_eq!(response.model_calls_consumed, 2);
    assert!(response.logprobs.is_none());

    let requests = server.requests.lock().unwrap();
    let body = &requests[0];
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello");
    assert_eq!(body["n"], 2);
    assert_eq!(body["seed"], 99);
    assert_eq!(body["temperature"], 1.5);
    assert_eq!(body["top_k"], 50);
    assert_eq!(body["max_tokens"], 4098);
    // min_p is dropped when the endpoint does not support it.
    assert!(body.get("min_p").is_none());

    let auth = server.auth_headers.lock().unwrap();
    assert_eq!(auth[0].as_deref(), Some("Bearer test-key-123"));
}

#[test]
fn transient_failures_are_retried_with_backoff() {
    let server = spawn_server(vec![
        Exchange {
            status: 500,
            body: "{}".into(),
        },
        Exchange {
            status: 503,
            body: "{}".into(),
        },
        Exchange {
            status: 200,
            body: completion_body(&["recovered"]),
        },
    ]);
    let generator = HttpGenerator::new(backend_config(&server.base_url)).unwrap();
    let response = generator.generate(&request(1)).unwrap();
    assert_eq!(response.texts, vec!["recovered"]);
    assert_eq!(server.requests.lock().unwrap().len(), 3);
}

#[test]
fn rate_limit_exhaustion_surfaces_after_cap() {
    let server = spawn_server(vec![
        Exchange { status: 429, body: "{}".into() },
        Exchange { status: 429, body: "{}".into() },
        Exchange { status: 429, body: "{}".into() },
    ]);
    let generator = HttpGenerator::new(backend_config(&server.base_url)).unwrap();
    let err = generator.generate(&request(1)).unwrap_err();
    assert!(matches!(err, memetron::Error::RateLimited { attempts: 3 }));
}

#[test]
fn client_errors_are_fatal_without_retry() {
    let server = spawn_server(vec![Exchange {
        status: 400,
        body: "{}".into(),
    }]);
    let generator = HttpGenerator::new(backend_config(&server.base_url)).unwrap();
    let err = generator.generate(&request(1)).unwrap_err();
    assert!(matches!(err, memetron::Error::Transport { .. }));
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn wrong_choice_count_is_an_error() {
    let server = spawn_server(vec![Exchange {
        status: 200,
        body: completion_body(&["only-one"]),
    }]);
    let generator = HttpGenerator::new(backend_config(&server.base_url)).unwrap();
    let err = generator.generate(&request(3)).unwrap_err();
    assert!(err.to_string().contains("1 choices for n=3"), "{err}");
}

#[test]
fn empty_completions_are_redrawn_through_the_budget_wrapper() {
    use memetron::model::BudgetedGenerator;
    let server = spawn_server(vec![
        Exchange {
            status: 200,
            body: completion_body(&["good", "   "]),
        },
        Exchange {
            status: 200,
            body: completion_body(&["redrawn"]),
        },
    ]);
    let backend = Arc::new(HttpGenerator::new(backend_config(&server.base_url)).unwrap());
    let budget = Arc::new(memetron::Budget::new(10, 10));
    let generator = BudgetedGenerator::new(backend, budget.clone());
    let response = generator.generate(&request(2)).unwrap();
    assert_eq!(response.texts, vec!["good", "redrawn"]);
    assert_eq!(budget.used_model_calls(), 3);
    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 2);
    assert_eq!(requests[1]["n"], 1);
}

#[test]
fn reward_endpoint_scores_batches_and_anchors() {
    std::env::set_var("MEMETRON_REWARD_TOKEN", "reward-token");
    let server = spawn_server(vec![
        Exchange {
            status: 200,
            body: r#"{"scores":[0.25,-1.5]}"#.into(),
        },
        Exchange {
            status: 200,
            body: r#"{"scores":[2.0]}"#.into(),
        },
    ]);
    let client = HttpReward::with_policy(
        server.base_url.clone(),
        true,
        RetryPolicy {
            max_retries: 0,
            base_backoff_ms: 1,
            timeout_secs: 5,
        },
    );
    let prompt = Prompt::new("q", "the question").unwrap();

    let scores = client.evaluate_batch(&prompt, &["alpha", "beta"]).unwrap();
    assert_eq!(scores, vec![0.25, -1.5]);

    let anchored = client.compare_batch(&prompt, &["candidate"], "anchor-text").unwrap();
    assert_eq!(anchored, vec![2.0]);

    let requests = server.requests.lock().unwrap();
    assert_eq!(requests[0]["prompt"], "the question");
    assert_eq!(requests[0]["candidates"], serde_json::json!(["alpha", "beta"]));
    assert_eq!(requests[0]["anchor"], serde_json::Value::Null);
    assert_eq!(requests[1]["anchor"], "anchor-text");

    let auth = server.auth_headers.lock().unwrap();
    assert_eq!(auth[0].as_deref(), Some("Bearer reward-token"));
}

#[test]
fn reward_endpoint_rejects_score_count_mismatch() {
    let server = spawn_server(vec![Exchange {
        status: 200,
        body: r#"{"scores":[1.0]}"#.into(),
    }]);
    let client = HttpReward::with_policy(
        server.base_url.clone(),
        true,
        RetryPolicy {
            max_retries: 0,
            base_backoff_ms: 1,
            timeout_secs: 5,
        },
    );
    let prompt = Prompt::new("q", "t").unwrap();
    let err = client.evaluate_batch(&prompt, &["a", "b"]).unwrap_err();
    assert!(err.to_string().contains("2 candidates"), "{err}");
}
