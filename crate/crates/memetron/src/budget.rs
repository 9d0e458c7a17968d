//! Run budgets with refuse-before-call semantics.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{BudgetKind, Error, Result};

/// Budget limits as they appear in a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub max_model_calls: u64,
    pub max_reward_evals: u64,
}

impl BudgetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.max_model_calls == 0 {
            return Err(Error::invalid("budget.max_model_calls", "must be positive"));
        }
        if self.max_reward_evals == 0 {
            return Err(Error::invalid("budget.max_reward_evals", "must be positive"));
        }
        Ok(())
    }

    pub fn build(&self) -> Budget {
        Budget::new(self.max_model_calls, self.max_reward_evals)
    }
}

impl Default for BudgetSpec {
    fn default() -> Self {
        BudgetSpec {
            max_model_calls: 1_000_000,
            max_reward_evals: 1_000_000,
        }
    }
}

/// Live budget counters for one search run.
///
/// An operation reserves its units *before* the external call is made; the
/// counters therefore never exceed their limits. Reservations are not
/// refunded on downstream failure, which keeps accounting conservative.
#[derive(Debug)]
pub struct Budget {
    max_model_calls: u64,
    max_reward_evals: u64,
    used_model_calls: AtomicU64,
    used_reward_evals: AtomicU64,
}

impl Budget {
    pub fn new(max_model_calls: u64, max_reward_evals: u64) -> Self {
        Budget {
            max_model_calls,
            max_reward_evals,
            used_model_calls: AtomicU64::new(0),
            used_reward_evals: AtomicU64::new(0),
        }
    }

    pub fn try_consume_model_calls(&self, n: u64) -> Result<()> {
        Self::try_consume(&self.used_model_calls, self.max_model_calls, n, BudgetKind::ModelCalls)
    }

    pub fn try_consume_reward_evals(&self, n: u64) -> Result<()> {
        Self::try_consume(&self.used_reward_evals, self.max_reward_evals, n, BudgetKind::RewardEvals)
    }

    fn try_consume(counter: &AtomicU64, max: u64, n: u64, kind: BudgetKind) -> Result<()> {
        counter
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |used| {
                used.checked_add(n).filter(|next| *next <= max)
            })
            .map(|_| ())
            .map_err(|used| Error::BudgetExceeded {
                kind,
                requested: n,
                used,
                max,
            })
    }

    pub fn used_model_calls(&self) -> u64 {
        self.used_model_calls.load(Ordering::SeqCst)
    }

    pub fn used_reward_evals(&self) -> u64 {
        self.used_reward_evals.load(Ordering::SeqCst)
    }

    pub fn max_model_calls(&self) -> u64 {
        self.max_model_calls
    }

    pub fn max_reward_evals(&self) -> u64 {
        self.max_reward_evals
    }

    pub fn remaining_model_calls(&self) -> u64 {
        self.max_model_calls - self.used_model_calls()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consume_within_limit() {
        let b = Budget::new(10, 5);
        b.try_consume_model_calls(4).unwrap();
        b.try_consume_model_calls(6).unwrap();
        assert_eq!(b.used_model_calls(), 10);
        assert_eq!(b.remaining_model_calls(), 0);
    }

    #[test]
    fn refuses_before_exceeding() {
        let b = Budget::new(10, 5);
        b.try_consume_model_calls(8).unwrap();
        let err = b.try_consume_model_calls(3).unwrap_err();
        assert!(err.is_budget_exhausted());
        // The failed reservation consumed nothing.
        assert_eq!(b.used_model_calls(), 8);
        b.try_consume_model_calls(2).unwrap();
    }

    #[test]
    fn reward_counter_is_independent() {
        let b = Budget::new(1, 2);
        b.try_consume_reward_evals(2).unwrap();
        assert!(b.try_consume_reward_evals(1).is_err());
        assert_eq!(b.used_reward_evals(), 2);
        assert_eq!(b.used_model_calls(), 0);
    }

    #[test]
    fn concurrent_consumption_never_exceeds_max() {
        let b = std::sync::Arc::new(Budget::new(1000, 1));
        let mut handles = Vec::new();
        for _ in 0..8 {
            let b = b.clone();
            handles.push(std::thread::spawn(move || {
                let mut granted = 0u64;
                for _ in 0..1000 {
                    if b.try_consume_model_calls(1).is_ok() {
                        granted += 1;
                    }
                }
                granted
            }));
        }
        let total: u64 = handles.into_iter().map(|h| h.join().unwrap()).sum();
        assert_eq!(total, 1000);
        assert_eq!(b.used_model_calls(), 1000);
    }
}
