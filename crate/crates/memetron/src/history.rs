//! The append-only run history.
//!
//! Every scored candidate of a run lands here in creation order; elitism and
//! the final answer are queries over this buffer. Entries are never mutated
//! or removed once appended, so any serialized prefix stays valid.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::types::{Candidate, CandidateId, NewCandidate};

#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    prompt_id: String,
    candidates: Vec<Candidate>,
}

impl HistoryBuffer {
    pub fn new(prompt_id: impl Into<String>) -> Self {
        HistoryBuffer {
            prompt_id: prompt_id.into(),
            candidates: Vec::new(),
        }
    }

    pub fn prompt_id(&self) -> &str {
        &self.prompt_id
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, id: CandidateId) -> Option<&Candidate> {
        self.candidates.get(id.index())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter()
    }

    /// Append a candidate, assigning the next id (previous max + 1, first is 0).
    ///
    /// Parents named by the origin must already be present, and a reward, if
    /// set, must be finite.
    pub fn record(&mut self, new: NewCandidate) -> Result<CandidateId> {
        for parent in new.origin.parents() {
            if parent.index() >= self.candidates.len() {
                return Err(Error::DanglingParent { parent });
            }
        }
        if let Some(reward) = new.reward {
            if !reward.is_finite() {
                return Err(Error::NonFiniteReward { value: reward });
            }
        }
        let id = CandidateId(self.candidates.len() as u64);
        self.candidates.push(Candidate {
            id,
            text: new.text,
            reward: new.reward,
            origin: new.origin,
            generation: new.generation,
            created_at_call: new.created_at_call,
        });
        Ok(id)
    }

    /// Highest-reward scored candidate; ties break toward the lowest id.
    pub fn best(&self) -> Result<&Candidate> {
        self.best_among(self.candidates.iter().map(|c| c.id))
    }

    /// Highest-reward candidate among `ids`; ties break toward the lowest id.
    pub fn best_among(&self, ids: impl IntoIterator<Item = CandidateId>) -> Result<&Candidate> {
        let mut best: Option<&Candidate> = None;
        for id in ids {
            let candidate = self.get(id).ok_or(Error::DanglingParent { parent: id })?;
            let Some(reward) = candidate.reward else {
                continue;
            };
            best = match best {
                None => Some(candidate),
                // Strict > keeps the earliest id on ties because ids ascend.
                Some(current) if reward > current.reward.unwrap() => Some(candidate),
                Some(current) => Some(current),
            };
        }
        best.ok_or(Error::EmptyHistory)
    }

    /// Ids of the top `n` scored candidates by reward, boundary ties toward
    /// lower ids. This equals the size-`n` subset maximizing the reward sum.
    pub fn top_n(&self, n: usize) -> Result<Vec<CandidateId>> {
        let mut scored: Vec<(f64, CandidateId)> = self
            .candidates
            .iter()
            .filter_map(|c| c.reward.map(|r| (r, c.id)))
            .collect();
        if scored.len() < n {
            return Err(Error::InsufficientHistory {
                available: scored.len(),
                required: n,
            });
        }
        scored.sort_by(|(ra, ia), (rb, ib)| {
            rb.partial_cmp(ra).expect("rewards are finite").then(ia.cmp(ib))
        });
        Ok(scored.into_iter().take(n).map(|(_, id)| id).collect())
    }

    pub fn write_jsonl(&self, mut writer: impl Write) -> Result<()> {
        for candidate in &self.candidates {
            serde_json::to_writer(&mut writer, candidate)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parse a history back from JSONL, reporting malformed lines with their
    /// line number. `path` is used only for error messages.
    pub fn read_jsonl(prompt_id: &str, path: &str, reader: impl BufRead) -> Result<Self> {
        let mut history = HistoryBuffer::new(prompt_id);
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let candidate: Candidate =
                serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
                    path: path.to_string(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            if candidate.id.index() != history.candidates.len() {
                return Err(Error::MalformedLine {
                    path: path.to_string(),
                    line: lineno + 1,
                    message: format!(
                        "candidate id {} out of order, expected {}",
                        candidate.id,
                        history.candidates.len()
                    ),
                });
            }
            history.candidates.push(candidate);
        }
        Ok(history)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Origin;

    fn scored(text: &str, reward: f64) -> NewCandidate {
        NewCandidate {
            text: text.into(),
            reward: Some(reward),
            origin: Origin::Initial,
            generation: 0,
            created_at_call: 0,
        }
    }

    #[test]
    fn record_assigns_monotone_ids() {
        let mut h = HistoryBuffer::new("p");
        assert_eq!(h.record(scored("a", 1.0)).unwrap(), CandidateId(0));
        for i in 1..16 {
            h.record(scored("x", 0.0)).unwrap();
            assert_eq!(h.len(), i + 1);
        }
        // Buffer of 16, one offspring appended -> id 16.
        let id = h
            .record(NewCandidate {
                text: "child".into(),
                reward: Some(2.0),
                origin: Origin::Crossover {
                    parent_a: CandidateId(0),
                    parent_b: CandidateId(1),
                    sample_index: 0,
                },
                generation: 1,
                created_at_call: 19,
            })
            .unwrap();
        assert_eq!(id, CandidateId(16));
    }

    #[test]
    fn record_rejects_dangling_parent() {
        let mut h = HistoryBuffer::new("p");
        h.record(scored("a", 1.0)).unwrap();
        let err = h
            .record(NewCandidate {
                text: "child".into(),
                reward: Some(2.0),
                origin: Origin::Refinement {
                    parent: CandidateId(99),
                    step: 1,
                    sample_index: 0,
                },
                generation: 0,
                created_at_call: 2,
            })
            .unwrap_err();
        assert!(matches!(err, Error::DanglingParent { parent } if parent == CandidateId(99)));
    }

    #[test]
    fn record_rejects_non_finite_reward() {
        let mut h = HistoryBuffer::new("p");
        assert!(h.record(scored("a", f64::NAN)).is_err());
        assert!(h.record(scored("a", f64::INFINITY)).is_err());
    }

    #[test]
    fn best_picks_max_then_lowest_id() {
        let mut h = HistoryBuffer::new("p");
        h.record(scored("a", 3.0)).unwrap();
        h.record(scored("b", 5.0)).unwrap();
        h.record(scored("c", 1.0)).unwrap();
        assert_eq!(h.best().unwrap().id, CandidateId(1));

        let mut tie = HistoryBuffer::new("p");
        tie.record(scored("a", 5.0)).unwrap();
        tie.record(scored("b", 5.0)).unwrap();
        assert_eq!(tie.best().unwrap().id, CandidateId(0));
    }

    #[test]
    fn best_errors_without_scored_candidates() {
        let h = HistoryBuffer::new("p");
        assert!(matches!(h.best(), Err(Error::EmptyHistory)));

        let mut unscored = HistoryBuffer::new("p");
        unscored
            .record(NewCandidate {
                text: "a".into(),
                reward: None,
                origin: Origin::Initial,
                generation: 0,
                created_at_call: 1,
            })
            .unwrap();
        assert!(matches!(unscored.best(), Err(Error::EmptyHistory)));
    }

    #[test]
    fn best_matches_linear_scan_on_seeded_history() {
        // 64 candidates with deterministic pseudo-random rewards.
        let mut h = HistoryBuffer::new("p");
        let mut rewards = Vec::new();
        for i in 0..64u64 {
            let r = ((crate::rng::splitmix64(i) >> 11) as f64 / (1u64 << 53) as f64) * 10.0;
            rewards.push(r);
            h.record(scored("x", r)).unwrap();
        }
        // Independent exhaustive scan.
        let mut best_idx = 0;
        for (i, r) in rewards.iter().enumerate() {
            if *r > rewards[best_idx] {
                best_idx = i;
            }
        }
        assert_eq!(h.best().unwrap().id, CandidateId(best_idx as u64));
    }

    #[test]
    fn top_n_orders_by_reward_then_id() {
        let mut h = HistoryBuffer::new("p");
        for r in [1.0, 2.0, 3.0, 4.0, 5.0] {
            h.record(scored("x", r)).unwrap();
        }
        let top = h.top_n(3).unwrap();
        assert_eq!(top, vec![CandidateId(4), CandidateId(3), CandidateId(2)]);

        let mut ties = HistoryBuffer::new("p");
        for _ in 0..3 {
            ties.record(scored("x", 2.0)).unwrap();
        }
        assert_eq!(ties.top_n(2).unwrap(), vec![CandidateId(0), CandidateId(1)]);

        assert!(matches!(
            ties.top_n(4),
            Err(Error::InsufficientHistory { available: 3, required: 4 })
        ));
    }

    #[test]
    fn jsonl_round_trip_preserves_order_and_bytes() {
        let mut h = HistoryBuffer::new("p");
        h.record(scored("alpha", 1.25)).unwrap();
        h.record(NewCandidate {
            text: "beta".into(),
            reward: Some(-0.5),
            origin: Origin::Crossover {
                parent_a: CandidateId(0),
                parent_b: CandidateId(0),
                sample_index: 2,
            },
            generation: 1,
            created_at_call: 4,
        })
        .unwrap();

        let mut bytes = Vec::new();
        h.write_jsonl(&mut bytes).unwrap();
        let parsed =
            HistoryBuffer::read_jsonl("p", "mem", std::io::Cursor::new(&bytes)).unwrap();
        let mut again = Vec::new();
        parsed.write_jsonl(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn read_jsonl_reports_line_numbers() {
        let input = "{\"id\":0,\"text\":\"a\",\"reward\":1.0,\"origin\":{\"kind\":\"initial\",\"parents\":[],\"sample_index\":null,\"step\":null},\"generation\":0,\"created_at_call\":1}\nnot json\n";
        let err = HistoryBuffer::read_jsonl("p", "h.jsonl", std::io::Cursor::new(input))
            .unwrap_err();
        match err {
            Error::MalformedLine { path, line, .. } => {
                assert_eq!(path, "h.jsonl");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
