//! Fusion and refinement prompt rendering.
//!
//! The canonical instruction blocks live in `templates/fusion.txt` and
//! `templates/refine.txt` and are embedded at compile time; custom templates
//! with the same placeholder contract can be loaded from disk. Rendering is a
//! pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Candidate, Prompt};

pub const FUSION_TEMPLATE: &str = include_str!("../templates/fusion.txt");
pub const REFINE_TEMPLATE: &str = include_str!("../templates/refine.txt");

pub const QUERY_PLACEHOLDER: &str = "{query}";
pub const RESPONSE_1_PLACEHOLDER: &str = "{response_1}";
pub const RESPONSE_2_PLACEHOLDER: &str = "{response_2}";
pub const RESPONSE_PLACEHOLDER: &str = "{response}";

/// Marker lines wrapped around embedded responses when rendering for the
/// simulated backend, so it can extract parent text unambiguously. They are
/// not sent to real endpoints unless explicitly enabled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentinels {
    pub begin_response_1: String,
    pub end_response_1: String,
    pub begin_response_2: String,
    pub end_response_2: String,
    pub begin_response: String,
    pub end_response: String,
}

impl Default for Sentinels {
    fn default() -> Self {
        Sentinels {
            begin_response_1: "-----BEGIN RESPONSE 1-----".into(),
            end_response_1: "-----END RESPONSE 1-----".into(),
            begin_response_2: "-----BEGIN RESPONSE 2-----".into(),
            end_response_2: "-----END RESPONSE 2-----".into(),
            begin_response: "-----BEGIN RESPONSE-----".into(),
            end_response: "-----END RESPONSE-----".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TemplateKind {
    Fusion,
    Refinement,
}

/// A validated template body: each required placeholder occurs exactly once.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    kind: TemplateKind,
    body: String,
}

impl PromptTemplate {
    pub fn fusion_default() -> Self {
        Self::new(TemplateKind::Fusion, FUSION_TEMPLATE).expect("embedded template is valid")
    }

    pub fn refine_default() -> Self {
        Self::new(TemplateKind::Refinement, REFINE_TEMPLATE).expect("embedded template is valid")
    }

    pub fn new(kind: TemplateKind, body: impl Into<String>) -> Result<Self> {
        let body = body.into();
        let required: &[&str] = match kind {
            TemplateKind::Fusion => &[
                QUERY_PLACEHOLDER,
                RESPONSE_1_PLACEHOLDER,
                RESPONSE_2_PLACEHOLDER,
            ],
            TemplateKind::Refinement => &[QUERY_PLACEHOLDER, RESPONSE_PLACEHOLDER],
        };
        for placeholder in required {
            if body.matches(placeholder).count() != 1 {
                return Err(Error::Template(format!(
                    "template must contain {placeholder} exactly once"
                )));
            }
        }
        Ok(PromptTemplate { kind, body })
    }

    pub fn from_file(kind: TemplateKind, path: &std::path::Path) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        Self::new(kind, body)
    }

    pub fn kind(&self) -> &TemplateKind {
        &self.kind
    }

    /// Substitute placeholders in one pass so payloads containing placeholder
    /// text are embedded verbatim rather than re-expanded.
    fn substitute(&self, pairs: &[(&str, &str)]) -> String {
        let mut out = String::with_capacity(self.body.len() + 256);
        let mut rest = self.body.as_str();
        // Placeholders are unique, so repeatedly taking the earliest one is
        // a single left-to-right pass.
        loop {
            let next = pairs
                .iter()
                .filter_map(|(ph, payload)| rest.find(ph).map(|at| (at, *ph, *payload)))
                .min_by_key(|(at, ..)| *at);
            match next {
                Some((at, ph, payload)) => {
                    out.push_str(&rest[..at]);
                    out.push_str(payload);
                    rest = &rest[at + ph.len()..];
                }
                None => {
                    out.push_str(rest);
                    return out;
                }
            }
        }
    }
}

/// How to embed payloads when rendering.
#[derive(Debug, Clone, Default)]
pub struct RenderOptions {
    /// Wrap embedded responses in sentinel marker lines.
    pub sentinel: Option<Sentinels>,
}

impl RenderOptions {
    pub fn plain() -> Self {
        RenderOptions { sentinel: None }
    }

    pub fn with_sentinels() -> Self {
        RenderOptions {
            sentinel: Some(Sentinels::default()),
        }
    }
}

fn wrap(text: &str, begin: &str, end: &str) -> String {
    format!("{begin}\n{text}\n{end}")
}

/// Render the fusion instruction block for two distinct parents.
pub fn render_fusion(
    template: &PromptTemplate,
    prompt: &Prompt,
    parent_a: &Candidate,
    parent_b: &Candidate,
    options: &RenderOptions,
) -> Result<String> {
    if !matches!(template.kind, TemplateKind::Fusion) {
        return Err(Error::Template("fusion rendering needs a fusion template".into()));
    }
    if parent_a.id == parent_b.id {
        return Err(Error::IdenticalParents { id: parent_a.id });
    }
    let (r1, r2) = match &options.sentinel {
        Some(s) => (
            wrap(&parent_a.text, &s.begin_response_1, &s.end_response_1),
            wrap(&parent_b.text, &s.begin_response_2, &s.end_response_2),
        ),
        None => (parent_a.text.clone(), parent_b.text.clone()),
    };
    Ok(template.substitute(&[
        (QUERY_PLACEHOLDER, &prompt.text),
        (RESPONSE_1_PLACEHOLDER, &r1),
        (RESPONSE_2_PLACEHOLDER, &r2),
    ]))
}

/// Render the refinement instruction block for the current response.
pub fn render_refine(
    template: &PromptTemplate,
    prompt: &Prompt,
    current: &Candidate,
    options: &RenderOptions,
) -> Result<String> {
    if !matches!(template.kind, TemplateKind::Refinement) {
        return Err(Error::Template("refinement rendering needs a refinement template".into()));
    }
    if current.text.is_empty() {
        return Err(Error::EmptyResponseText);
    }
    let response = match &options.sentinel {
        Some(s) => wrap(&current.text, &s.begin_response, &s.end_response),
        None => current.text.clone(),
    };
    Ok(template.substitute(&[
        (QUERY_PLACEHOLDER, &prompt.text),
        (RESPONSE_PLACEHOLDER, &response),
    ]))
}

/// Extract the text between `begin` and `end` marker lines, if present.
pub(crate) fn extract_between<'a>(rendered: &'a str, begin: &str, end: &str) -> Option<&'a str> {
    let start = rendered.find(begin)? + begin.len();
    let after = &rendered[start..];
    let after = after.strip_prefix('\n')?;
    let stop = after.find(end)?;
    after[..stop].strip_suffix('\n')
}
