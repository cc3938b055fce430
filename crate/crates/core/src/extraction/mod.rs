//! Feature extraction strategies and the plan optimizer.
//!
//! Five methods share one result type: a seeded random baseline, a single
//! prompt over the whole opinion, the same with step-by-step reasoning, a
//! plan/execute agent, and the agent with discourse-tree explanations.

mod methods;
mod optimize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DocId, FeatureId};
use crate::discourse::{DiscourseError, RstSubtree};
use crate::gateway::{GatewayError, ModelSettings};
use crate::prompts::{PromptSet, TemplateError};
use crate::sectioning::SectionLabel;

pub use methods::{run_agentic, run_agentic_tod, run_cot, run_random, run_vanilla, Extractor};
pub use optimize::{
    optimize, optimize_with, Budget, Failure, Lineage, OptimizationOutcome, OptimizationStatus, OptimizationTrace,
    TraceIteration, TrainingCase,
};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error("document {0} has no opinion text")]
    EmptyOpinion(DocId),
    #[error("no JSON verdict found in model output")]
    VerdictNotFound { raw: String },
    #[error("model produced a plan with no steps")]
    PlanEmpty,
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("optimization needs at least one training case")]
    EmptyTrainingSet,
    #[error("artifacts for {doc} do not match: {message}")]
    ArtifactMismatch { doc: DocId, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Discourse(#[from] DiscourseError),
}

/// Label returned by a model. Gold labels are binary; `NotAddressed` is
/// scored as negative unless the evaluator is told otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredictedLabel {
    #[serde(rename = "true")]
    True,
    #[serde(rename = "false")]
    False,
    #[serde(rename = "not addressed")]
    NotAddressed,
}

impl PredictedLabel {
    pub const ALL: [PredictedLabel; 3] = [PredictedLabel::True, PredictedLabel::False, PredictedLabel::NotAddressed];

    pub fn as_str(&self) -> &'static str {
        match self {
            PredictedLabel::True => "true",
            PredictedLabel::False => "false",
            PredictedLabel::NotAddressed => "not addressed",
        }
    }

    pub fn is_positive(&self) -> bool {
        *self == PredictedLabel::True
    }
}

impl From<bool> for PredictedLabel {
    fn from(b: bool) -> Self {
        if b {
            PredictedLabel::True
        } else {
            PredictedLabel::False
        }
    }
}

impl FromStr for PredictedLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().replace('_', " ").as_str() {
            "true" => Ok(PredictedLabel::True),
            "false" => Ok(PredictedLabel::False),
            "not addressed" => Ok(PredictedLabel::NotAddressed),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

impl fmt::Display for PredictedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Vanilla,
    Cot,
    Agentic,
    AgenticTod,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Random, Method::Vanilla, Method::Cot, Method::Agentic, Method::AgenticTod];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Vanilla => "vanilla",
            Method::Cot => "cot",
            Method::Agentic => "agentic",
            Method::AgenticTod => "agentic_tod",
        }
    }

    /// Row name used in reports.
    pub fn display_name(&self) -> &'static str {
        match self {
            Method::Random => "Random Baseline",
            Method::Vanilla => "Vanilla LLM",
            Method::Cot => "CoT",
            Method::Agentic => "Agentic LLM",
            Method::AgenticTod => "Agentic LLM + ToD",
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDefinition {
    pub id: FeatureId,
    pub name: String,
    pub definition_text: String,
    pub label_space: Vec<PredictedLabel>,
}

pub const PUNITIVE_FEATURE_ID: &str = "punitive_component";

impl FeatureDefinition {
    /// The punitive-component feature. Its definition is the body of the
    /// verdict prompt between the task sentence and the response format.
    pub fn punitive_component() -> Self {
        let prompts = PromptSet::default();
        let body = prompts.label_prediction().text();
        let start = body.find("A punitive component").expect("definition present in verdict prompt");
        let end = body.find("Respond in the following").expect("response format present in verdict prompt");
        Self {
            id: PUNITIVE_FEATURE_ID.to_string(),
            name: "punitive component".to_string(),
            definition_text: body[start..end].trim().to_string(),
            label_space: PredictedLabel::ALL.to_vec(),
        }
    }
}

/// Versioned prompt that asks a model to write an extraction plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanPrompt {
    pub feature_id: FeatureId,
    pub version: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<Lineage>,
}

impl PlanPrompt {
    pub fn seed(feature: &FeatureDefinition, prompts: &PromptSet) -> Self {
        Self {
            feature_id: feature.id.clone(),
            version: 0,
            text: prompts.get("plan_seed").text().trim().to_string(),
            lineage: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub feature_id: FeatureId,
    pub steps: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub doc_id: DocId,
    pub feature_id: FeatureId,
    pub method: Method,
    pub label: PredictedLabel,
    pub reasoning: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<RstSubtree>,
}

/// How the executor runs a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// One call per plan step, each seeing earlier findings.
    #[default]
    PerStep,
    /// One call carrying the whole plan.
    WholePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub model: ModelSettings,
    pub max_repair_attempts: u32,
    pub step_mode: StepMode,
    /// Upper bound on EDUs verbalized for the discourse prompt.
    pub max_candidate_edus: usize,
    /// Section labels passed to the discourse prompt as relevant sections.
    pub relevant_sections: Vec<SectionLabel>,
    /// Opinions longer than this are summarized chunk by chunk first.
    pub max_context_chars: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            model: ModelSettings::default(),
            max_repair_attempts: 2,
            step_mode: StepMode::PerStep,
            max_candidate_edus: 12,
            relevant_sections: vec![SectionLabel::AnalysisOfReliefAndDamages],
            max_context_chars: 400_000,
        }
    }
}

pub fn write_results<W: std::io::Write>(mut w: W, results: &[ExtractionResult]) -> std::io::Result<()> {
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads result JSONL; errors carry the 1-based line number.
pub fn read_results<R: std::io::BufRead>(reader: R) -> Result<Vec<ExtractionResult>, String> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_serialization() {
        assert_eq!(serde_json::to_string(&PredictedLabel::NotAddressed).unwrap(), "\"not addressed\"");
        assert_eq!("Not_Addressed".parse::<PredictedLabel>().unwrap(), PredictedLabel::NotAddressed);
        assert_eq!(" TRUE ".parse::<PredictedLabel>().unwrap(), PredictedLabel::True);
        assert!("maybe".parse::<PredictedLabel>().is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert_eq!("agentic-tod".parse::<Method>().unwrap(), Method::AgenticTod);
    }

    #[test]
    fn punitive_definition() {
        let f = FeatureDefinition::punitive_component();
        assert!(f.definition_text.starts_with("A punitive component"));
        assert!(f.definition_text.contains("504(c)(2)"));
        assert!(f.definition_text.ends_with("no stated punitive or deterrent intent."));
        assert_eq!(f.label_space.len(), 3);
    }

    #[test]
    fn results_without_evidence_omit_the_field() {
        let r = ExtractionResult {
            doc_id: "d".into(),
            feature_id: PUNITIVE_FEATURE_ID.into(),
            method: Method::Vanilla,
            label: PredictedLabel::True,
            reasoning: "r".into(),
            evidence: None,
        };
        let mut buf = Vec::new();
        write_results(&mut buf, std::slice::from_ref(&r)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert!(!line.contains("evidence"));
        assert_eq!(read_results(buf.as_slice()).unwrap(), vec![r]);
    }
}
