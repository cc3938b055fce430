use std::collections::BTreeSet;
use std::sync::LazyLock;

use rand::SeedableRng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde_json::Value;

use super::{
    ExtractionConfig, ExtractionError, ExtractionResult, FeatureDefinition, Method, Plan, PlanPrompt, PredictedLabel,
    StepMode,
};
use crate::corpus::{DocId, Document};
use crate::discourse::{extract_subtree, path_to_root, validate_subtree, EduId, RstSubtree, RstTree, Verbalizer};
use crate::gateway::{json, ChatMessage, CompletionRequest, Gateway, JsonSchema, JSON_REPAIR_INSTRUCTION};
use crate::prompts::{self, PromptSet};
use crate::sectioning::{chunk_paragraphs, select_sections, SegmentedOpinion};
use crate::text;

const FULL_OPINION_INPUT: &str = "The full text of the judicial opinion.";
const TOD_INPUTS: &str = "Sections of the opinion that analyze relief and damages, followed by explanations of how selected discourse units (EDUs, cited as \"EDU n\") fit into the rhetorical structure of the opinion.";

/// Phrases that mark an EDU as a likely statement about the damage award.
const DAMAGE_KEYWORDS: [&str; 12] = [
    "statutory damages",
    "willful",
    "deter",
    "punish",
    "punitive",
    "504(c)",
    "enhanced",
    "maximum",
    "award",
    "$",
    "per work",
    "compensat",
];

static EDU_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bEDUs?\s*#?\s*(\d+(?:\s*(?:,|and|&|-|to)\s*#?\s*\d+)*)").expect("valid regex"));
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").expect("valid regex"));
static QUOTED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""([^"]{12,})"|\u{201C}([^\u{201D}]{12,})\u{201D}"#).expect("valid regex"));

fn verdict_schema() -> JsonSchema {
    JsonSchema::object([
        ("label", JsonSchema::one_of(PredictedLabel::ALL.iter().map(|l| l.as_str()))),
        ("reasoning", JsonSchema::NonEmptyString),
    ])
}

fn plan_schema() -> JsonSchema {
    JsonSchema::object([("steps", JsonSchema::array(JsonSchema::String))])
}

fn reflection_schema() -> JsonSchema {
    JsonSchema::object([("consistent", JsonSchema::Boolean), ("issue", JsonSchema::String)])
}

/// Label and reasoning from a verdict object.
fn read_verdict(value: &Value) -> Option<(PredictedLabel, String)> {
    let label = value.get("label")?.as_str()?.parse().ok()?;
    let reasoning = value.get("reasoning").and_then(Value::as_str).unwrap_or_default();
    Some((label, reasoning.trim().to_string()))
}

fn numbered(items: &[String]) -> String {
    if items.is_empty() {
        return "None yet.".to_string();
    }
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs the LLM-based methods with shared prompts and settings.
pub struct Extractor<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    config: ExtractionConfig,
}

impl<'a> Extractor<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a PromptSet, config: ExtractionConfig) -> Self {
        Self {
            gateway,
            prompts,
            config,
        }
    }

    pub fn config(&self) -> &ExtractionConfig {
        &self.config
    }

    fn result(&self, doc: &Document, feature: &FeatureDefinition, method: Method, label: PredictedLabel, reasoning: String) -> ExtractionResult {
        ExtractionResult {
            doc_id: doc.id.clone(),
            feature_id: feature.id.clone(),
            method,
            label,
            reasoning,
            evidence: None,
        }
    }

    fn request(&self, prompt: String) -> CompletionRequest {
        self.config.model.prompt(prompt)
    }

    fn verdict(&self, prompt: String) -> Result<(PredictedLabel, String), ExtractionError> {
        let parsed = self
            .gateway
            .complete_json(&self.request(prompt), &verdict_schema(), self.config.max_repair_attempts)?;
        read_verdict(&parsed.value).ok_or(ExtractionError::VerdictNotFound { raw: parsed.raw })
    }

    /// The opinion text, or per-chunk summaries when it is too long for one
    /// prompt.
    fn opinion_for_prompt(&self, doc: &Document, feature: &FeatureDefinition) -> Result<String, ExtractionError> {
        if doc.opinion_text.trim().is_empty() {
            return Err(ExtractionError::EmptyOpinion(doc.id.clone()));
        }
        if doc.opinion_text.len() <= self.config.max_context_chars {
            return Ok(doc.opinion_text.clone());
        }
        let chunks = chunk_paragraphs(&doc.opinion_text, self.config.max_context_chars / 4);
        log::info!("{}: opinion exceeds context budget; summarizing {} chunks", doc.id, chunks.len());
        let summaries = chunks
            .par_iter()
            .map(|chunk| {
                let prompt = self.prompts.get("chunk_summary").render(&[
                    (prompts::FEATURE_DEFINITION, &feature.definition_text),
                    (prompts::JUDICIAL_OPINION, chunk),
                ])?;
                Ok(self.gateway.complete(&self.request(prompt))?.text.trim().to_string())
            })
            .collect::<Result<Vec<_>, ExtractionError>>()?;
        Ok(summaries.join("\n\n"))
    }

    pub fn vanilla(&self, doc: &Document, feature: &FeatureDefinition) -> Result<ExtractionResult, ExtractionError> {
        let opinion = self.opinion_for_prompt(doc, feature)?;
        let prompt = self
            .prompts
            .label_prediction()
            .render(&[(prompts::JUDICIAL_OPINION, &opinion)])?;
        let (label, reasoning) = self.verdict(prompt)?;
        Ok(self.result(doc, feature, Method::Vanilla, label, reasoning))
    }

    /// Free-form reasoning followed by a verdict; the last JSON object in the
    /// reply is the verdict.
    pub fn cot(&self, doc: &Document, feature: &FeatureDefinition) -> Result<ExtractionResult, ExtractionError> {
        let opinion = self.opinion_for_prompt(doc, feature)?;
        let prompt = self
            .prompts
            .label_prediction_cot()
            .render(&[(prompts::JUDICIAL_OPINION, &opinion)])?;
        let raw = self.gateway.complete(&self.request(prompt))?.text;
        let verdict = json::last_json_object(&raw)
            .filter(|v| verdict_schema().validate(v).is_ok())
            .and_then(|v| read_verdict(&v));
        match verdict {
            Some((label, reasoning)) => Ok(self.result(doc, feature, Method::Cot, label, reasoning)),
            None => Err(ExtractionError::VerdictNotFound { raw }),
        }
    }

    fn plan_request(&self, feature: &FeatureDefinition, prompt: &PlanPrompt, available: &str) -> Result<CompletionRequest, ExtractionError> {
        let text = self.prompts.get("plan_generation").render(&[
            (prompts::PLAN_PROMPT, &prompt.text),
            (prompts::FEATURE_DEFINITION, &feature.definition_text),
            (prompts::AVAILABLE_INPUTS, available),
        ])?;
        Ok(self.request(text))
    }

    /// Asks for a plan on `request`; an empty plan gets one repair.
    fn plan_from(&self, feature: &FeatureDefinition, mut request: CompletionRequest) -> Result<(Plan, CompletionRequest), ExtractionError> {
        for attempt in 0..2 {
            let reply = self
                .gateway
                .complete_json(&request, &plan_schema(), self.config.max_repair_attempts)?;
            let steps: Vec<String> = reply.value["steps"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            request.messages.push(ChatMessage::assistant(reply.raw));
            if !steps.is_empty() {
                let plan = Plan {
                    feature_id: feature.id.clone(),
                    steps,
                };
                return Ok((plan, request));
            }
            if attempt == 0 {
                request.messages.push(ChatMessage::user(format!(
                    "The plan has no steps. Provide at least one step. {JSON_REPAIR_INSTRUCTION}"
                )));
            }
        }
        Err(ExtractionError::PlanEmpty)
    }

    fn execute(&self, feature: &FeatureDefinition, plan: &Plan, inputs: &str) -> Result<Vec<String>, ExtractionError> {
        let step_template = self.prompts.get("plan_step");
        let run = |step: &str, findings: &[String]| -> Result<String, ExtractionError> {
            let prompt = step_template.render(&[
                (prompts::FEATURE_DEFINITION, &feature.definition_text),
                (prompts::JUDICIAL_OPINION, inputs),
                (prompts::PRIOR_FINDINGS, &numbered(findings)),
                (prompts::PLAN_STEP, step),
            ])?;
            Ok(self.gateway.complete(&self.request(prompt))?.text.trim().to_string())
        };
        match self.config.step_mode {
            StepMode::PerStep => {
                let mut findings = Vec::with_capacity(plan.steps.len());
                for step in &plan.steps {
                    let f = run(step, &findings)?;
                    findings.push(f);
                }
                Ok(findings)
            }
            StepMode::WholePlan => Ok(vec![run(&numbered(&plan.steps), &[])?]),
        }
    }

    fn reflect(&self, feature: &FeatureDefinition, findings: &[String]) -> Result<Option<String>, ExtractionError> {
        let prompt = self.prompts.get("plan_reflection").render(&[
            (prompts::FEATURE_DEFINITION, &feature.definition_text),
            (prompts::PRIOR_FINDINGS, &numbered(findings)),
        ])?;
        let reply = self.gateway.complete_json(
            &self.request(prompt),
            &reflection_schema(),
            self.config.max_repair_attempts,
        )?;
        if reply.value["consistent"].as_bool() == Some(true) {
            return Ok(None);
        }
        let issue = reply.value["issue"].as_str().unwrap_or_default().trim();
        Ok(Some(if issue.is_empty() { "unspecified inconsistency".to_string() } else { issue.to_string() }))
    }

    /// Plan, execute, reflect once and re-plan if the findings are
    /// inconsistent. Returns the findings of the last execution.
    fn plan_and_execute(
        &self,
        feature: &FeatureDefinition,
        prompt: &PlanPrompt,
        available: &str,
        inputs: &str,
    ) -> Result<Vec<String>, ExtractionError> {
        let (plan, conversation) = self.plan_from(feature, self.plan_request(feature, prompt, available)?)?;
        let findings = self.execute(feature, &plan, inputs)?;
        let Some(issue) = self.reflect(feature, &findings)? else {
            return Ok(findings);
        };
        log::info!("reflection flagged findings ({issue}); re-planning once");
        let mut replan = conversation;
        replan.messages.push(ChatMessage::user(format!(
            "Executing this plan produced findings that cannot support a verdict: {issue}\nWrite a revised plan. {JSON_REPAIR_INSTRUCTION}"
        )));
        let (revised, _) = self.plan_from(feature, replan)?;
        self.execute(feature, &revised, inputs)
    }

    fn with_findings(inputs: &str, findings: &[String]) -> String {
        format!("{inputs}\n\nFindings from the extraction plan:\n{}", numbered(findings))
    }

    pub fn agentic(&self, doc: &Document, feature: &FeatureDefinition, prompt: &PlanPrompt) -> Result<ExtractionResult, ExtractionError> {
        let opinion = self.opinion_for_prompt(doc, feature)?;
        let findings = self.plan_and_execute(feature, prompt, FULL_OPINION_INPUT, &opinion)?;
        let verdict_prompt = self
            .prompts
            .label_prediction()
            .render(&[(prompts::JUDICIAL_OPINION, &Self::with_findings(&opinion, &findings))])?;
        let (label, reasoning) = self.verdict(verdict_prompt)?;
        Ok(self.result(doc, feature, Method::Agentic, label, reasoning))
    }

    /// Agent run over the damages sections and verbalized discourse paths.
    /// Evidence is the subtree over the EDUs the reasoning cites.
    pub fn agentic_tod(
        &self,
        doc: &Document,
        seg: &SegmentedOpinion,
        tree: &RstTree,
        feature: &FeatureDefinition,
        prompt: &PlanPrompt,
    ) -> Result<ExtractionResult, ExtractionError> {
        if doc.opinion_text.trim().is_empty() {
            return Err(ExtractionError::EmptyOpinion(doc.id.clone()));
        }
        if seg.doc_id != doc.id || tree.doc_id != doc.id {
            return Err(ExtractionError::ArtifactMismatch {
                doc: doc.id.clone(),
                message: format!("segmentation is for {}, tree is for {}", seg.doc_id, tree.doc_id),
            });
        }
        let wanted: BTreeSet<_> = self.config.relevant_sections.iter().cloned().collect();
        let selected = select_sections(seg, &wanted);
        let sections = if selected.is_empty() {
            log::warn!("{}: no relevant sections labeled; using the whole opinion", doc.id);
            doc.opinion_text.clone()
        } else {
            selected.iter().map(|s| s.content.trim()).collect::<Vec<_>>().join("\n\n")
        };
        let candidates = candidate_edus(tree, &sections, self.config.max_candidate_edus);
        let verbalizer = Verbalizer::new(self.gateway, self.prompts, self.config.model.clone());
        let explanations = candidates
            .par_iter()
            .map(|&id| {
                let edu = tree.edu(id)?;
                let path = path_to_root(tree, id)?;
                let explanation = verbalizer.verbalize(&path, tree, &edu.text)?;
                Ok(format!("EDU {id}: \"{}\"\n{explanation}", edu.text.trim()))
            })
            .collect::<Result<Vec<_>, ExtractionError>>()?;
        let explanations = if explanations.is_empty() {
            "None.".to_string()
        } else {
            explanations.join("\n\n")
        };
        let inputs = format!("{sections}\n\nDiscourse-Supported Explanations:\n{explanations}");
        let findings = self.plan_and_execute(feature, prompt, TOD_INPUTS, &inputs)?;
        let verdict_prompt = self.prompts.label_prediction_tod().render(&[
            (prompts::JUDICIAL_OPINION, &Self::with_findings(&sections, &findings)),
            (prompts::LINEARIZED_TOD, &explanations),
        ])?;
        let (label, reasoning) = self.verdict(verdict_prompt)?;
        let mut result = self.result(doc, feature, Method::AgenticTod, label, reasoning);
        result.evidence = resolve_evidence(tree, &result.reasoning)?;
        if result.evidence.is_none() {
            log::warn!("{}: reasoning cites no locatable discourse unit; evidence omitted", doc.id);
        }
        Ok(result)
    }
}

/// EDUs that lie inside `sections`, ranked by damage keywords and capped at
/// `max`, returned in document order. Falls back to the whole tree when no
/// EDU text is found in the sections.
pub(crate) fn candidate_edus(tree: &RstTree, sections: &str, max: usize) -> Vec<EduId> {
    let haystack = text::normalize(sections);
    let mut pool: Vec<_> = tree
        .edus
        .iter()
        .filter(|e| haystack.contains(&text::normalize(&e.text)))
        .collect();
    if pool.is_empty() {
        pool = tree.edus.iter().collect();
    }
    let mut scored: Vec<(usize, EduId)> = pool
        .into_iter()
        .map(|e| {
            let lower = e.text.to_lowercase();
            (DAMAGE_KEYWORDS.iter().filter(|k| lower.contains(*k)).count(), e.id)
        })
        .filter(|(score, _)| *score > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut ids: Vec<EduId> = scored.into_iter().take(max).map(|(_, id)| id).collect();
    ids.sort_unstable();
    ids
}

/// EDUs cited by id, or failing that, EDUs whose text the reasoning quotes.
pub(crate) fn cited_edus(tree: &RstTree, reasoning: &str) -> BTreeSet<EduId> {
    let mut ids = BTreeSet::new();
    for cap in EDU_REF.captures_iter(reasoning) {
        let list = &cap[1];
        let nums: Vec<EduId> = NUMBER.find_iter(list).filter_map(|m| m.as_str().parse().ok()).collect();
        let is_range = nums.len() == 2 && (list.contains('-') || list.contains("to"));
        if is_range && nums[0] <= nums[1] {
            ids.extend(nums[0]..=nums[1]);
        } else {
            ids.extend(nums);
        }
    }
    ids.retain(|&id| tree.edu(id).is_ok());
    if !ids.is_empty() {
        return ids;
    }
    for cap in QUOTED.captures_iter(reasoning) {
        let quote = text::normalize(cap.get(1).or(cap.get(2)).map(|m| m.as_str()).unwrap_or_default());
        for e in &tree.edus {
            let t = text::normalize(&e.text);
            if t.contains(&quote) || (text::word_count(&t) >= 3 && quote.contains(&t)) {
                ids.insert(e.id);
            }
        }
    }
    ids
}

fn resolve_evidence(tree: &RstTree, reasoning: &str) -> Result<Option<RstSubtree>, ExtractionError> {
    let ids = cited_edus(tree, reasoning);
    if ids.is_empty() {
        return Ok(None);
    }
    let sub = extract_subtree(tree, &ids)?;
    validate_subtree(&sub, tree)?;
    Ok(Some(sub))
}

pub fn run_vanilla(doc: &Document, feature: &FeatureDefinition, gateway: &Gateway) -> Result<ExtractionResult, ExtractionError> {
    let prompts = PromptSet::default();
    Extractor::new(gateway, &prompts, ExtractionConfig::default()).vanilla(doc, feature)
}

pub fn run_cot(doc: &Document, feature: &FeatureDefinition, gateway: &Gateway) -> Result<ExtractionResult, ExtractionError> {
    let prompts = PromptSet::default();
    Extractor::new(gateway, &prompts, ExtractionConfig::default()).cot(doc, feature)
}

pub fn run_agentic(
    doc: &Document,
    feature: &FeatureDefinition,
    prompt: &PlanPrompt,
    gateway: &Gateway,
) -> Result<ExtractionResult, ExtractionError> {
    let prompts = PromptSet::default();
    Extractor::new(gateway, &prompts, ExtractionConfig::default()).agentic(doc, feature, prompt)
}

pub fn run_agentic_tod(
    doc: &Document,
    seg: &SegmentedOpinion,
    tree: &RstTree,
    feature: &FeatureDefinition,
    prompt: &PlanPrompt,
    gateway: &Gateway,
) -> Result<ExtractionResult, ExtractionError> {
    let prompts = PromptSet::default();
    Extractor::new(gateway, &prompts, ExtractionConfig::default()).agentic_tod(doc, seg, tree, feature, prompt)
}

/// Seeded baseline: each document is labeled true with probability
/// `p_positive`.
pub fn run_random(
    doc_ids: &[DocId],
    feature_id: &str,
    p_positive: f64,
    seed: u64,
) -> Result<Vec<ExtractionResult>, ExtractionError> {
    if !(0.0..=1.0).contains(&p_positive) {
        return Err(ExtractionError::InvalidProbability(p_positive));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(doc_ids
        .iter()
        .map(|id| ExtractionResult {
            doc_id: id.clone(),
            feature_id: feature_id.to_string(),
            method: Method::Random,
            label: rng.random_bool(p_positive).into(),
            reasoning: format!("random draw with p={p_positive}"),
            evidence: None,
        })
        .collect())
}
