//! Domain types shared by all search algorithms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A user query, keyed by a stable id within one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub text: String,
}

impl Prompt {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let prompt = Prompt {
            id: id.into(),
            text: text.into(),
        };
        prompt.validate()?;
        Ok(prompt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::invalid("prompt.id", "must be non-empty"));
        }
        if self.text.is_empty() {
            return Err(Error::invalid("prompt.text", "must be non-empty"));
        }
        // Ids become file name components (`history_<id>.jsonl`).
        if !self
            .id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(Error::invalid(
                "prompt.id",
                format!("{:?} contains characters outside [A-Za-z0-9_.-]", self.id),
            ));
        }
        Ok(())
    }
}

/// Decoding knobs forwarded to generator backends.
///
/// Values are validated up front and rejected, never clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    /// 0 disables top-k filtering.
    pub top_k: u32,
    pub top_p: f64,
    pub min_p: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::invalid(
                "sampling.temperature",
                format!("must be a non-negative real, got {}", self.temperature),
            ));
        }
        if !self.top_p.is_finite() || self.top_p <= 0.0 || self.top_p > 1.0 {
            return Err(Error::invalid(
                "sampling.top_p",
                format!("must be in (0, 1], got {}", self.top_p),
            ));
        }
        if !self.min_p.is_finite() || !(0.0..=1.0).contains(&self.min_p) {
            return Err(Error::invalid(
                "sampling.min_p",
                format!("must be in [0, 1], got {}", self.min_p),
            ));
        }
        if self.max_tokens == 0 {
            return Err(Error::invalid("sampling.max_tokens", "must be positive"));
        }
        Ok(())
    }
}

impl Default for SamplingParams {
    /// Decoding defaults used throughout the evaluation protocol:
    /// temperature 1.5, min-p 0.1, top-k 50, token limit 4098.
    fn default() -> Self {
        SamplingParams {
            temperature: 1.5,
            top_k: 50,
            top_p: 1.0,
            min_p: 0.1,
            max_tokens: 4098,
            seed: None,
        }
    }
}

/// Monotone creation-order id of a candidate within one run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct CandidateId(pub u64);

impl CandidateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for CandidateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How a candidate came to exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    /// Sampled directly from the plain prompt.
    Initial,
    /// Fusion of two parents; `sample_index` is the winning best-of-n draw.
    Crossover {
        parent_a: CandidateId,
        parent_b: CandidateId,
        sample_index: u32,
    },
    /// Refinement of `parent` at annealing step `step` (1-based).
    Refinement {
        parent: CandidateId,
        step: u32,
        sample_index: u32,
    },
}

impl Origin {
    pub fn parents(&self) -> Vec<CandidateId> {
        match self {
            Origin::Initial => vec![],
            Origin::Crossover {
                parent_a, parent_b, ..
            } => vec![*parent_a, *parent_b],
            Origin::Refinement { parent, .. } => vec![*parent],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Origin::Initial => "initial",
            Origin::Crossover { .. } => "crossover",
            Origin::Refinement { .. } => "refinement",
        }
    }
}

// Wire format is fixed: {"kind":...,"parents":[...],"sample_index":...,"step":...}.
#[derive(Serialize, Deserialize)]
struct OriginWire {
    kind: String,
    parents: Vec<CandidateId>,
    sample_index: Option<u32>,
    step: Option<u32>,
}

impl Serialize for Origin {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = match self {
            Origin::Initial => OriginWire {
                kind: "initial".into(),
                parents: vec![],
                sample_index: None,
                step: None,
            },
            Origin::Crossover {
                parent_a,
                parent_b,
                sample_index,
            } => OriginWire {
                kind: "crossover".into(),
                parents: vec![*parent_a, *parent_b],
                sample_index: Some(*sample_index),
                step: None,
            },
            Origin::Refinement {
                parent,
                step,
                sample_index,
            } => OriginWire {
                kind: "refinement".into(),
                parents: vec![*parent],
                sample_index: Some(*sample_index),
                step: Some(*step),
            },
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Origin {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let wire = OriginWire::deserialize(deserializer)?;
        match wire.kind.as_str() {
            "initial" => Ok(Origin::Initial),
            "crossover" => {
                if wire.parents.len() != 2 {
                    return Err(D::Error::custom("crossover origin needs 2 parents"));
                }
                Ok(Origin::Crossover {
                    parent_a: wire.parents[0],
                    parent_b: wire.parents[1],
                    sample_index: wire
                        .sample_index
                        .ok_or_else(|| D::Error::custom("crossover origin needs sample_index"))?,
                })
            }
            "refinement" => {
                if wire.parents.len() != 1 {
                    return Err(D::Error::custom("refinement origin needs 1 parent"));
                }
                Ok(Origin::Refinement {
                    parent: wire.parents[0],
                    step: wire
                        .step
                        .ok_or_else(|| D::Error::custom("refinement origin needs step"))?,
                    sample_index: wire
                        .sample_index
                        .ok_or_else(|| D::Error::custom("refinement origin needs sample_index"))?,
                })
            }
            other => Err(D::Error::custom(format!("unknown origin kind {other:?}"))),
        }
    }
}

/// One generated response, with reward and lineage.
///
/// Field order matches the persisted JSONL schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    pub text: String,
    pub reward: Option<f64>,
    pub origin: Origin,
    pub generation: u32,
    /// Cumulative model-call count at creation time.
    pub created_at_call: u64,
}

impl Candidate {
    pub fn reward(&self) -> Result<f64> {
        self.reward.ok_or(Error::UnscoredCandidate { id: self.id })
    }
}

/// A candidate not yet admitted to a history buffer (no id assigned).
#[derive(Debug, Clone)]
pub struct NewCandidate {
    pub text: String,
    pub reward: Option<f64>,
    pub origin: Origin,
    pub generation: u32,
    pub created_at_call: u64,
}

/// Geometric cooling schedule with a floor.
///
/// The floor keeps the Metropolis exponent away from division underflow once
/// the decay has effectively converged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub t0: f64,
    pub alpha: f64,
    #[serde(default = "TemperatureSchedule::default_floor")]
    pub t_floor: f64,
}

impl TemperatureSchedule {
    pub fn default_floor() -> f64 {
        1e-6
    }

    pub fn new(t0: f64, alpha: f64, t_floor: f64) -> Result<Self> {
        let schedule = TemperatureSchedule { t0, alpha, t_floor };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t0.is_finite() || self.t0 <= 0.0 {
            return Err(Error::invalid(
                "schedule.t0",
                format!("must be positive, got {}", self.t0),
            ));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 || self.alpha >= 1.0 {
            return Err(Error::invalid(
                "schedule.alpha",
                format!("must be in (0, 1), got {}", self.alpha),
            ));
        }
        if !self.t_floor.is_finite() || self.t_floor < 0.0 {
            return Err(Error::invalid(
                "schedule.t_floor",
                format!("must be non-negative, got {}", self.t_floor),
            ));
        }
        if self.t_floor > self.t0 {
            return Err(Error::invalid(
                "schedule.t_floor",
                format!("floor {} exceeds t0 {}", self.t_floor, self.t0),
            ));
        }
        Ok(())
    }

    /// One cooling step: `max(alpha * t, t_floor)`.
    pub fn cool(&self, t: f64) -> f64 {
        (self.alpha * t).max(self.t_floor)
    }

    /// Temperature at step `t` in closed form: `max(t0 * alpha^t, t_floor)`.
    pub fn at(&self, step: u32) -> f64 {
        (self.t0 * self.alpha.powi(step as i32)).max(self.t_floor)
    }
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        TemperatureSchedule {
            t0: 1.5,
            alpha: 0.9,
            t_floor: Self::default_floor(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_rejects_empty_fields() {
        assert!(Prompt::new("", "x").is_err());
        assert!(Prompt::new("a", "").is_err());
        assert!(Prompt::new("a/b", "x").is_err());
        assert!(Prompt::new("q-1.x_Y", "x").is_ok());
    }

    #[test]
    fn sampling_params_validation() {
        let ok = SamplingParams::default();
        assert!(ok.validate().is_ok());

        let mut bad = ok.clone();
        bad.temperature = -0.1;
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.top_p = 0.0;
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.top_p = 1.5;
        assert!(bad.validate().is_err());

        let mut bad = ok.clone();
        bad.min_p = 1.1;
        assert!(bad.validate().is_err());

        let mut bad = ok;
        bad.max_tokens = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn origin_wire_format_is_exact() {
        let initial = serde_json::to_string(&Origin::Initial).unwrap();
        assert_eq!(
            initial,
            r#"{"kind":"initial","parents":[],"sample_index":null,"step":null}"#
        );

        let crossover = serde_json::to_string(&Origin::Crossover {
            parent_a: CandidateId(3),
            parent_b: CandidateId(7),
            sample_index: 1,
        })
        .unwrap();
        assert_eq!(
            crossover,
            r#"{"kind":"crossover","parents":[3,7],"sample_index":1,"step":null}"#
        );

        let refinement = serde_json::to_string(&Origin::Refinement {
            parent: CandidateId(9),
            step: 4,
            sample_index: 0,
        })
        .unwrap();
        assert_eq!(
            refinement,
            r#"{"kind":"refinement","parents":[9],"sample_index":0,"step":4}"#
        );

        for json in [&initial, &crossover, &refinement] {
            let back: Origin = serde_json::from_str(json).unwrap();
            assert_eq!(serde_json::to_string(&back).unwrap(), **json);
        }
    }

    #[test]
    fn candidate_wire_format_is_exact() {
        let candidate = Candidate {
            id: CandidateId(0),
            text: "abc".into(),
            reward: Some(-1.5),
            origin: Origin::Initial,
            generation: 0,
            created_at_call: 16,
        };
        assert_eq!(
            serde_json::to_string(&candidate).unwrap(),
            r#"{"id":0,"text":"abc","reward":-1.5,"origin":{"kind":"initial","parents":[],"sample_index":null,"step":null},"generation":0,"created_at_call":16}"#
        );
    }

    #[test]
    fn schedule_validation_and_cooling() {
        assert!(TemperatureSchedule::new(0.0, 0.9, 0.0).is_err());
        assert!(TemperatureSchedule::new(1.0, 1.0, 0.0).is_err());
        assert!(TemperatureSchedule::new(1.0, 0.9, 2.0).is_err());

        let s = TemperatureSchedule::new(1.0, 0.9, 1e-6).unwrap();
        let t1 = s.cool(1.0);
        let t2 = s.cool(t1);
        assert!((t2 - 0.81).abs() < 1e-12);

        // Floor holds.
        assert_eq!(s.cool(1e-6), 1e-6);
        assert_eq!(s.cool(s.t_floor), s.t_floor);
    }

    #[test]
    fn schedule_closed_form_matches_iteration() {
        let s = TemperatureSchedule::new(2.0, 0.95, 1e-9).unwrap();
        let mut t = s.t0;
        for step in 0..50 {
            assert!((t - s.at(step)).abs() <= 1e-12 * t.max(1.0));
            t = s.cool(t);
        }
        // Closed-form cross-check via logarithms: 2 * 0.95^50.
        let expected = (2.0f64.ln() + 50.0 * 0.95f64.ln()).exp();
        assert!((s.at(50) - expected).abs() < 1e-12);
    }
}
