//! Shared retry/backoff policy for HTTP backends.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Additional attempts after the first try.
    pub max_retries: u32,
    /// Backoff before retry k is `base * 2^k`, in milliseconds.
    pub base_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_backoff_ms: 200,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug)]
pub enum Attempt<T> {
    Ok(T),
    /// Transient failure worth retrying (transport error or 429/5xx).
    Transient { rate_limited: bool, message: String },
    /// Definite failure; retrying cannot help.
    Fatal(Error),
}

/// Run `op` with exponential backoff until it succeeds, fails fatally, or the
/// retry cap is exhausted.
pub fn with_retries<T>(policy: &RetryPolicy, mut op: impl FnMut() -> Attempt<T>) -> Result<T> {
    let attempts = policy.max_retries + 1;
    let mut last_rate_limited = false;
    let mut last_message = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            let backoff = policy.base_backoff_ms.saturating_mul(1 << (attempt - 1));
            std::thread::sleep(Duration::from_millis(backoff));
        }
        match op() {
            Attempt::Ok(value) => return Ok(value),
            Attempt::Fatal(err) => return Err(err),
            Attempt::Transient {
                rate_limited,
                message,
            } => {
                log::warn!("attempt {}/{attempts} failed: {message}", attempt + 1);
                last_rate_limited = rate_limited;
                last_message = message;
            }
        }
    }
    if last_rate_limited {
        Err(Error::RateLimited { attempts })
    } else {
        Err(Error::Transport {
            attempts,
            message: last_message,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_policy() -> RetryPolicy {
        RetryPolicy {
            max_retries: 2,
            base_backoff_ms: 0,
            timeout_secs: 1,
        }
    }

    #[test]
    fn succeeds_after_transient_failures() {
        let mut calls = 0;
        let out = with_retries(&fast_policy(), || {
            calls += 1;
            if calls < 3 {
                Attempt::Transient {
                    rate_limited: false,
                    message: "boom".into(),
                }
            } else {
                Attempt::Ok(42)
            }
        })
        .unwrap();
        assert_eq!(out, 42);
        assert_eq!(calls, 3);
    }

    #[test]
    fn gives_up_after_cap() {
        let mut calls = 0;
        let err = with_retries::<()>(&fast_policy(), || {
            calls += 1;
            Attempt::Transient {
                rate_limited: false,
                message: "down".into(),
            }
        })
        .unwrap_err();
        assert_eq!(calls, 3);
        assert!(matches!(err, Error::Transport { attempts: 3, .. }));
    }

    #[test]
    fn rate_limit_exhaustion_is_distinct() {
        let err = with_retries::<()>(&fast_policy(), || Attempt::Transient {
            rate_limited: true,
            message: "429".into(),
        })
        .unwrap_err();
        assert!(matches!(err, Error::RateLimited { attempts: 3 }));
    }

    #[test]
    fn fatal_stops_immediately() {
        let mut calls = 0;
        let err = with_retries::<()>(&fast_policy(), || {
            calls += 1;
            Attempt::Fatal(Error::invalid("x", "bad"))
        })
        .unwrap_err();
        assert_eq!(calls, 1);
        assert!(matches!(err, Error::InvalidParam { .. }));
    }
}
