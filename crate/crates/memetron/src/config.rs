//! Run configuration: a single versioned JSON document selecting the
//! algorithm, backend, reward, budgets, and output location.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::annetron::{AnnetronConfig, ScoringMode};
use crate::budget::BudgetSpec;
use crate::error::{Error, Result};
use crate::genetron::GenetronConfig;
use crate::model::http::{HttpBackendConfig, HttpGenerator};
use crate::model::simulated::{SimulatedConfig, SimulatedGenerator};
use crate::model::Generator;
use crate::prompts::{PromptTemplate, RenderOptions, TemplateKind};
use crate::reward::{RewardKind, RewardSpec};
use crate::types::SamplingParams;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Genetron,
    Annetron,
    Memetron,
    BestOfNBaseline,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Genetron => "genetron",
            Algorithm::Annetron => "annetron",
            Algorithm::Memetron => "memetron",
            Algorithm::BestOfNBaseline => "best_of_n_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Simulated(SimulatedConfig),
    Http(HttpBackendConfig),
}

impl BackendSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            BackendSpec::Simulated(config) => config.validate(),
            BackendSpec::Http(config) => config.validate(),
        }
    }

    pub fn is_simulated(&self) -> bool {
        matches!(self, BackendSpec::Simulated(_))
    }
}

/// Optional template overrides; files must honor the placeholder contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TemplatePaths {
    #[serde(default)]
    pub fusion: Option<PathBuf>,
    #[serde(default)]
    pub refine: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub backend: BackendSpec,
    #[serde(default)]
    pub sampling: SamplingParams,
    pub reward: RewardSpec,
    #[serde(default)]
    pub genetron: GenetronConfig,
    #[serde(default)]
    pub annetron: AnnetronConfig,
    #[serde(default)]
    pub budget: BudgetSpec,
    /// Mandatory for the simulated backend; defaults to 0 for HTTP runs.
    #[serde(default)]
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Wrap embedded responses in sentinel markers. Defaults to on for the
    /// simulated backend (its parser needs them) and off for HTTP.
    #[serde(default)]
    pub sentinels: Option<bool>,
    #[serde(default)]
    pub templates: TemplatePaths,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::invalid(
                "config.schema_version",
                format!("expected {CONFIG_SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        self.backend.validate()?;
        self.sampling.validate()?;
        self.reward.validate()?;
        self.genetron.validate()?;
        self.annetron.validate()?;
        self.budget.validate()?;
        if self.backend.is_simulated() && self.seed.is_none() {
            return Err(Error::invalid(
                "config.seed",
                "required for the simulated backend",
            ));
        }
        let anchored_reward = self.reward.kind == RewardKind::AnchoredPairwise;
        let anchored_scoring = self.annetron.scoring == ScoringMode::Anchored;
        if anchored_reward != anchored_scoring {
            return Err(Error::invalid(
                "config.annetron.scoring",
                "anchored scoring and an anchored_pairwise reward must be used together",
            ));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn build_backend(&self) -> Result<Arc<dyn Generator>> {
        Ok(match &self.backend {
            BackendSpec::Simulated(config) => Arc::new(SimulatedGenerator::new(config.clone())?),
            BackendSpec::Http(config) => Arc::new(HttpGenerator::new(config.clone())?),
        })
    }

    pub fn render_options(&self) -> RenderOptions {
        let enabled = self.sentinels.unwrap_or_else(|| self.backend.is_simulated());
        if !enabled {
            return RenderOptions::plain();
        }
        let markers = match &self.backend {
            BackendSpec::Simulated(config) => config.sentinels.clone().unwrap_or_default(),
            BackendSpec::Http(_) => Default::default(),
        };
        RenderOptions {
            sentinel: Some(markers),
        }
    }

    pub fn fusion_template(&self) -> Result<PromptTemplate> {
        match &self.templates.fusion {
            Some(path) => PromptTemplate::from_file(TemplateKind::Fusion, path),
            None => Ok(PromptTemplate::fusion_default()),
        }
    }

    pub fn refine_template(&self) -> Result<PromptTemplate> {
        match &self.templates.refine {
            Some(path) => PromptTemplate::from_file(TemplateKind::Refinement, path),
            None => Ok(PromptTemplate::refine_default()),
        }
    }
}
