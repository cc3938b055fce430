use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExtractionError, ExtractionResult, Extractor, FeatureDefinition, PlanPrompt, PredictedLabel};
use crate::corpus::{DocId, Document, FeatureId};
use crate::discourse::RstTree;
use crate::gateway::{Gateway, JsonSchema, ModelSettings};
use crate::prompts::{self, PromptSet};
use crate::sectioning::SegmentedOpinion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    /// Maximum number of revision attempts. Zero returns the seed untouched.
    pub max_iterations: u32,
    /// Cases evaluated per iteration, taken from the front of the training
    /// set; `None` uses all of them.
    pub minibatch_size: Option<usize>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_iterations: 8,
            minibatch_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub parent_version: u32,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub doc_id: DocId,
    pub predicted: PredictedLabel,
    pub gold: bool,
    pub model_reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceIteration {
    pub prompt_version: u32,
    pub train_accuracy: f64,
    pub best_accuracy: f64,
    pub accepted: bool,
    pub failures: Vec<Failure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizationStatus {
    /// Every minibatch case was extracted correctly.
    Perfect,
    /// Revisions ran out with failures remaining.
    BudgetExhausted,
    /// No iterations were allowed; the seed was not evaluated.
    Unoptimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub feature_id: FeatureId,
    pub status: OptimizationStatus,
    pub iterations: Vec<TraceIteration>,
}

impl OptimizationTrace {
    /// True when best-so-far accuracy never decreases.
    pub fn is_monotone(&self) -> bool {
        self.iterations.windows(2).all(|w| w[0].best_accuracy <= w[1].best_accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub prompt: PlanPrompt,
    pub trace: OptimizationTrace,
}

/// Artifacts for one training opinion. With both a segmentation and a tree
/// the discourse-aware agent is used, otherwise the plain agent.
#[derive(Debug, Clone, Copy)]
pub struct TrainingCase<'a> {
    pub doc: &'a Document,
    pub seg: Option<&'a SegmentedOpinion>,
    pub tree: Option<&'a RstTree>,
    pub gold: bool,
}

fn revision_schema() -> JsonSchema {
    JsonSchema::object([("prompt", JsonSchema::NonEmptyString), ("rationale", JsonSchema::String)])
}

fn first_sentence(text: &str) -> &str {
    text.find(". ").map(|i| &text[..=i]).unwrap_or(text)
}

/// Failures as numbered JSON objects, without document ids.
fn describe_failures(feature: &FeatureDefinition, failures: &[Failure]) -> String {
    failures
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let item = serde_json::json!({
                "gold": if f.gold { "true" } else { "false" },
                "predicted": f.predicted.as_str(),
                "model_reasoning": f.model_reasoning,
                "definition_excerpt": first_sentence(&feature.definition_text),
            });
            format!("Case {}: {item}", i + 1)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

struct Evaluation {
    accuracy: f64,
    failures: Vec<Failure>,
}

fn evaluate<T, F>(batch: &[(T, bool)], prompt: &PlanPrompt, executor: &F) -> Result<Evaluation, ExtractionError>
where
    T: Sync,
    F: Fn(&T, &PlanPrompt) -> Result<ExtractionResult, ExtractionError> + Sync,
{
    let results = batch
        .par_iter()
        .map(|(case, gold)| executor(case, prompt).map(|r| (r, *gold)))
        .collect::<Result<Vec<_>, _>>()?;
    let failures: Vec<Failure> = results
        .into_iter()
        .filter(|(r, gold)| r.label.is_positive() != *gold)
        .map(|(r, gold)| Failure {
            doc_id: r.doc_id,
            predicted: r.label,
            gold,
            model_reasoning: r.reasoning,
        })
        .collect();
    Ok(Evaluation {
        accuracy: (batch.len() - failures.len()) as f64 / batch.len() as f64,
        failures,
    })
}

/// Greedy prompt refinement with any executor.
///
/// Each iteration asks the model to revise the current prompt given its
/// failures, evaluates the candidate on the same minibatch, and accepts it
/// if accuracy does not drop. The best prompt by accuracy is returned, with
/// the lowest version winning ties.
#[allow(clippy::too_many_arguments)]
pub fn optimize_with<T, F>(
    feature: &FeatureDefinition,
    train: &[(T, bool)],
    seed: &PlanPrompt,
    budget: Budget,
    gateway: &Gateway,
    prompts: &PromptSet,
    model: &ModelSettings,
    executor: F,
) -> Result<OptimizationOutcome, ExtractionError>
where
    T: Sync,
    F: Fn(&T, &PlanPrompt) -> Result<ExtractionResult, ExtractionError> + Sync,
{
    if train.is_empty() {
        return Err(ExtractionError::EmptyTrainingSet);
    }
    let mut trace = OptimizationTrace {
        feature_id: feature.id.clone(),
        status: OptimizationStatus::Unoptimized,
        iterations: Vec::new(),
    };
    if budget.max_iterations == 0 {
        return Ok(OptimizationOutcome {
            prompt: seed.clone(),
            trace,
        });
    }
    let size = budget.minibatch_size.unwrap_or(train.len()).clamp(1, train.len());
    let batch = &train[..size];

    let mut current = seed.clone();
    let mut current_eval = evaluate(batch, &current, &executor)?;
    let mut best = (current.clone(), current_eval.accuracy);
    trace.iterations.push(TraceIteration {
        prompt_version: current.version,
        train_accuracy: current_eval.accuracy,
        best_accuracy: best.1,
        accepted: true,
        failures: current_eval.failures.clone(),
        revision_text: None,
    });

    for version in (seed.version + 1..).take(budget.max_iterations as usize) {
        if current_eval.failures.is_empty() {
            break;
        }
        let request = prompts.get("plan_revision").render(&[
            (prompts::FEATURE_DEFINITION, &feature.definition_text),
            (prompts::PLAN_PROMPT, &current.text),
            (prompts::FAILURES, &describe_failures(feature, &current_eval.failures)),
        ])?;
        let reply = gateway.complete_json(&model.prompt(request), &revision_schema(), 2)?;
        let rationale = reply.value["rationale"].as_str().unwrap_or_default().trim().to_string();
        let candidate = PlanPrompt {
            feature_id: feature.id.clone(),
            version,
            text: reply.value["prompt"].as_str().unwrap_or_default().trim().to_string(),
            lineage: Some(Lineage {
                parent_version: current.version,
                rationale: rationale.clone(),
            }),
        };
        let eval = evaluate(batch, &candidate, &executor)?;
        let accepted = eval.accuracy >= current_eval.accuracy;
        if eval.accuracy > best.1 {
            best = (candidate.clone(), eval.accuracy);
        }
        trace.iterations.push(TraceIteration {
            prompt_version: candidate.version,
            train_accuracy: eval.accuracy,
            best_accuracy: best.1,
            accepted,
            failures: eval.failures.clone(),
            revision_text: Some(rationale),
        });
        if accepted {
            current = candidate;
            current_eval = eval;
        }
    }
    trace.status = if best.1 >= 1.0 {
        OptimizationStatus::Perfect
    } else {
        OptimizationStatus::BudgetExhausted
    };
    Ok(OptimizationOutcome { prompt: best.0, trace })
}

/// Optimizes the plan prompt by running the agent on the training cases.
pub fn optimize(
    feature: &FeatureDefinition,
    train: &[TrainingCase<'_>],
    seed: &PlanPrompt,
    budget: Budget,
    extractor: &Extractor<'_>,
    gateway: &Gateway,
    prompts: &PromptSet,
) -> Result<OptimizationOutcome, ExtractionError> {
    let cases: Vec<(TrainingCase<'_>, bool)> = train.iter().map(|c| (*c, c.gold)).collect();
    optimize_with(
        feature,
        &cases,
        seed,
        budget,
        gateway,
        prompts,
        &extractor.config().model,
        |case, prompt| match (case.seg, case.tree) {
            (Some(seg), Some(tree)) => extractor.agentic_tod(case.doc, seg, tree, feature, prompt),
            _ => extractor.agentic(case.doc, feature, prompt),
        },
    )
}
