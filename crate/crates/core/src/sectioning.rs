//! Opinion segmentation and functional section labeling.
//!
//! Segmentation and labeling are two separate LLM calls. A segmentation is
//! only accepted when the returned sections, concatenated in order, reproduce
//! the opinion up to whitespace and quote-style normalization.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{DocId, Document};
use crate::gateway::{ChatMessage, Gateway, GatewayError, JsonSchema, ModelSettings, JSON_REPAIR_INSTRUCTION};
use crate::prompts::{self, PromptSet, TemplateError};
use crate::text;

#[derive(Debug, Error)]
pub enum SectioningError {
    #[error("opinion text is empty")]
    EmptyOpinion,
    #[error("sections do not reassemble the opinion: first divergence at normalized char {offset} (expected {expected:?}, found {found:?})")]
    ReassemblyMismatch {
        offset: usize,
        expected: String,
        found: String,
    },
    #[error("invalid section label {0:?}: not canonical and not prefixed with NEW_")]
    InvalidLabel(String),
    #[error("section {0} is not part of the opinion text")]
    SectionNotInText(usize),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Functional role of a section within an opinion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SectionLabel {
    Introduction,
    ProceduralHistory,
    BackgroundFacts,
    AnalysisOfInfringement,
    AnalysisOfLiability,
    AnalysisOfReliefAndDamages,
    AnalysisOfAttorneysFees,
    InterpretationOfLaw,
    AnalysisOfDefenses,
    JurisdictionAndStanding,
    OrderSummary,
    SupplementaryInformation,
    AnalysisOfDefaultJudgment,
    /// Model-proposed label; always starts with `NEW_`.
    Custom(String),
}

pub const CUSTOM_PREFIX: &str = "NEW_";

const CANONICAL: [(SectionLabel, &str, &str); 13] = [
    (SectionLabel::Introduction, "Introduction", "Provides an overview of the case, including the nature of the dispute and the parties involved."),
    (SectionLabel::ProceduralHistory, "Procedural History", "Summarizes the sequence of legal actions and rulings leading up to the current decision."),
    (SectionLabel::BackgroundFacts, "Background Facts", "Presents the factual context and events that gave rise to the legal dispute."),
    (SectionLabel::AnalysisOfInfringement, "Analysis of the Infringement", "Evaluates whether a copyright infringement occurred based on the presented facts and legal standards."),
    (SectionLabel::AnalysisOfLiability, "Analysis of the Liability", "Determines who is legally responsible for the alleged infringement or harm."),
    (SectionLabel::AnalysisOfReliefAndDamages, "Analysis of the Relief and Damages", "Describes the judge’s assessment of the remedies awarded, including monetary damages or injunctive relief."),
    (SectionLabel::AnalysisOfAttorneysFees, "Analysis of Attorneys' Fees", "Considers whether attorney’s fees should be granted and under what justification."),
    (SectionLabel::InterpretationOfLaw, "Interpretation of the Law", "Explains how specific legal statutes or precedents are understood and applied in this case."),
    (SectionLabel::AnalysisOfDefenses, "Analysis of Defenses", "Reviews and evaluates the validity of defenses raised by the defendant, such as fair use or license."),
    (SectionLabel::JurisdictionAndStanding, "Jurisdiction and Standing", "Determines whether the court has the authority to hear the case and whether the parties have the right to bring the action."),
    (SectionLabel::OrderSummary, "Order/Summary", "Announces the court's final judgment, summarizes the opinion, or issues a directive resolving the case."),
    (SectionLabel::SupplementaryInformation, "Supplementary Description or Case Information", "Provides any additional case-related information included by the judge."),
    (SectionLabel::AnalysisOfDefaultJudgment, "Analysis of Default Judgment", "Evaluates whether default judgment is procedurally justified based on the defendant's failure to respond and relevant legal standards."),
];

impl SectionLabel {
    pub fn canonical() -> impl Iterator<Item = SectionLabel> {
        CANONICAL.iter().map(|(l, _, _)| l.clone())
    }

    pub fn as_str(&self) -> &str {
        match self {
            SectionLabel::Custom(s) => s,
            other => CANONICAL
                .iter()
                .find(|(l, _, _)| l == other)
                .map(|(_, name, _)| *name)
                .expect("every non-custom label is canonical"),
        }
    }

    pub fn definition(&self) -> Option<&'static str> {
        CANONICAL.iter().find(|(l, _, _)| l == self).map(|(_, _, d)| *d)
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, SectionLabel::Custom(_))
    }

    /// Numbered `Name: definition` list used to fill prompt templates.
    pub fn definitions_block() -> String {
        CANONICAL
            .iter()
            .enumerate()
            .map(|(i, (_, name, def))| format!("{}. {name}: {def}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl FromStr for SectionLabel {
    type Err = SectioningError;

    /// Accepts canonical names (ignoring case and apostrophe style) and
    /// `NEW_`-prefixed custom labels.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        if let Some(rest) = trimmed.strip_prefix(CUSTOM_PREFIX) {
            if rest.trim().is_empty() {
                return Err(SectioningError::InvalidLabel(s.to_string()));
            }
            return Ok(SectionLabel::Custom(trimmed.to_string()));
        }
        let wanted = text::normalize(trimmed).to_lowercase();
        CANONICAL
            .iter()
            .find(|(_, name, _)| name.to_lowercase() == wanted)
            .map(|(l, _, _)| l.clone())
            .ok_or_else(|| SectioningError::InvalidLabel(s.to_string()))
    }
}

impl TryFrom<String> for SectionLabel {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse().map_err(|e: SectioningError| e.to_string())
    }
}

impl From<SectionLabel> for String {
    fn from(l: SectionLabel) -> String {
        l.as_str().to_string()
    }
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub index: usize,
    pub label: Option<SectionLabel>,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedOpinion {
    pub doc_id: DocId,
    pub sections: Vec<Section>,
}

impl SegmentedOpinion {
    /// Checks index order, non-empty content and whitespace-normalized
    /// reassembly against `opinion_text`.
    pub fn validate(&self, opinion_text: &str) -> Result<(), SectioningError> {
        if let Some(bad) = self
            .sections
            .iter()
            .enumerate()
            .find(|(i, s)| s.index != *i || s.content.trim().is_empty())
        {
            return Err(SectioningError::SectionNotInText(bad.0));
        }
        let contents: Vec<&str> = self.sections.iter().map(|s| s.content.as_str()).collect();
        check_reassembly(opinion_text, &contents)
    }

    pub fn is_labeled(&self) -> bool {
        self.sections.iter().all(|s| s.label.is_some())
    }
}

/// Verifies that `sections`, joined in order, equal `opinion_text` after
/// whitespace and quote normalization.
pub fn check_reassembly(opinion_text: &str, sections: &[&str]) -> Result<(), SectioningError> {
    let expected = text::normalize(opinion_text);
    let found = text::normalize(&sections.join(" "));
    match text::first_divergence(&expected, &found) {
        None => Ok(()),
        Some(offset) => Err(SectioningError::ReassemblyMismatch {
            offset,
            expected: text::snippet(&expected, offset, 40),
            found: text::snippet(&found, offset, 40),
        }),
    }
}

/// What to do when the labeler answers with a label outside the taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownLabelPolicy {
    /// Ask once more, then fail with `InvalidLabel`.
    #[default]
    Reprompt,
    /// Accept it as a custom `NEW_` label.
    Prefix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectioningConfig {
    pub model: ModelSettings,
    /// Opinions longer than this are segmented in paragraph-aligned chunks.
    pub max_chunk_chars: usize,
    pub max_repair_attempts: u32,
    pub unknown_label_policy: UnknownLabelPolicy,
}

impl Default for SectioningConfig {
    fn default() -> Self {
        Self {
            model: ModelSettings::default(),
            max_chunk_chars: 60_000,
            max_repair_attempts: 2,
            unknown_label_policy: UnknownLabelPolicy::Reprompt,
        }
    }
}

pub struct Sectioner<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    config: SectioningConfig,
}

fn segmentation_schema() -> JsonSchema {
    JsonSchema::object([(
        "result",
        JsonSchema::array(JsonSchema::object([
            ("index", JsonSchema::Integer),
            ("content", JsonSchema::String),
        ])),
    )])
}

fn label_schema() -> JsonSchema {
    JsonSchema::object([("result", JsonSchema::NonEmptyString)])
}

impl<'a> Sectioner<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a PromptSet, config: SectioningConfig) -> Self {
        Self {
            gateway,
            prompts,
            config,
        }
    }

    /// Splits the opinion into unlabeled sections.
    pub fn segment(&self, doc: &Document) -> Result<SegmentedOpinion, SectioningError> {
        if doc.opinion_text.trim().is_empty() {
            return Err(SectioningError::EmptyOpinion);
        }
        let mut contents = Vec::new();
        for chunk in chunk_paragraphs(&doc.opinion_text, self.config.max_chunk_chars) {
            let chunk_sections = self.segment_chunk(chunk)?;
            contents.extend(chunk_sections);
        }
        let seg = SegmentedOpinion {
            doc_id: doc.id.clone(),
            sections: contents
                .into_iter()
                .enumerate()
                .map(|(index, content)| Section {
                    index,
                    label: None,
                    content,
                })
                .collect(),
        };
        seg.validate(&doc.opinion_text)?;
        Ok(seg)
    }

    fn segment_chunk(&self, chunk: &str) -> Result<Vec<String>, SectioningError> {
        let definitions = SectionLabel::definitions_block();
        let prompt = self.prompts.segmentation().render(&[
            (prompts::SECTION_LABEL_DEFINITIONS, &definitions),
            (prompts::JUDICIAL_OPINION, chunk),
        ])?;
        let reply = self.gateway.complete_json(
            &self.config.model.prompt(prompt),
            &segmentation_schema(),
            self.config.max_repair_attempts,
        )?;
        let sections = parse_segmentation(&reply.value);
        let refs: Vec<&str> = sections.iter().map(String::as_str).collect();
        check_reassembly(chunk, &refs)?;
        Ok(sections)
    }

    /// Assigns one label to `section`, which must come from `full_text`.
    pub fn label_section(&self, full_text: &str, section: &Section) -> Result<SectionLabel, SectioningError> {
        if !text::normalize(full_text).contains(&text::normalize(&section.content)) {
            return Err(SectioningError::SectionNotInText(section.index));
        }
        let task = serde_json::json!({"full": full_text, "target_section": section.content}).to_string();
        let definitions = SectionLabel::definitions_block();
        let prompt = self.prompts.labeling().render(&[
            (prompts::SECTION_LABEL_DEFINITIONS, &definitions),
            (prompts::SECTION_CONTENT, &task),
        ])?;
        let request = self.config.model.prompt(prompt);
        let reply = self
            .gateway
            .complete_json(&request, &label_schema(), self.config.max_repair_attempts)?;
        let raw_label = reply.value["result"].as_str().unwrap_or_default().to_string();
        match raw_label.parse::<SectionLabel>() {
            Ok(label) => Ok(warn_custom(label)),
            Err(_) if self.config.unknown_label_policy == UnknownLabelPolicy::Prefix => {
                Ok(warn_custom(SectionLabel::Custom(format!("{CUSTOM_PREFIX}{}", raw_label.trim()))))
            }
            Err(_) => {
                let mut retry = request;
                retry.messages.push(ChatMessage::assistant(reply.raw));
                retry.messages.push(ChatMessage::user(format!(
                    "\"{raw_label}\" is not one of the predefined labels. Use a predefined label, or a custom label prefixed with \"NEW_\" only if none fits. {JSON_REPAIR_INSTRUCTION}"
                )));
                let second = self
                    .gateway
                    .complete_json(&retry, &label_schema(), self.config.max_repair_attempts)?;
                let label = second.value["result"].as_str().unwrap_or_default();
                label.parse::<SectionLabel>().map(warn_custom)
            }
        }
    }

    /// Labels every section; calls run in parallel and results are placed by
    /// section index.
    pub fn label_all(&self, full_text: &str, seg: &SegmentedOpinion) -> Result<SegmentedOpinion, SectioningError> {
        let labels: Vec<SectionLabel> = seg
            .sections
            .par_iter()
            .map(|s| self.label_section(full_text, s))
            .collect::<Result<_, _>>()?;
        let mut out = seg.clone();
        for (section, label) in out.sections.iter_mut().zip(labels) {
            section.label = Some(label);
        }
        Ok(out)
    }

    pub fn segment_and_label(&self, doc: &Document) -> Result<SegmentedOpinion, SectioningError> {
        let seg = self.segment(doc)?;
        self.label_all(&doc.opinion_text, &seg)
    }
}

fn warn_custom(label: SectionLabel) -> SectionLabel {
    if label.is_custom() {
        log::warn!("model proposed custom section label {label}");
    }
    label
}

/// Section contents in reply order; blank sections are dropped.
fn parse_segmentation(value: &Value) -> Vec<String> {
    value["result"]
        .as_array()
        .map(|items| {
            items
                .iter()
                .filter_map(|it| it["content"].as_str())
                .filter(|c| !c.trim().is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

/// Cuts `text` into contiguous slices of at most `max_chars` bytes at blank
/// line boundaries. A single paragraph longer than the limit stays whole.
pub fn chunk_paragraphs(text: &str, max_chars: usize) -> Vec<&str> {
    if text.len() <= max_chars || max_chars == 0 {
        return vec![text];
    }
    let mut boundaries = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(off) = text[i..].find("\n\n") {
        let mut end = i + off + 2;
        while end < bytes.len() && bytes[end] == b'\n' {
            end += 1;
        }
        boundaries.push(end);
        i = end;
        if i >= text.len() {
            break;
        }
    }
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut last_ok = None;
    for &b in &boundaries {
        if b - start > max_chars {
            if let Some(cut) = last_ok.filter(|&c| c > start) {
                chunks.push(&text[start..cut]);
                start = cut;
            }
        }
        last_ok = Some(b);
    }
    if text.len() - start > max_chars {
        if let Some(cut) = last_ok.filter(|&c| c > start && c < text.len()) {
            chunks.push(&text[start..cut]);
            start = cut;
        }
    }
    chunks.push(&text[start..]);
    chunks.retain(|c| !c.trim().is_empty());
    chunks
}

/// Sections whose label is in `wanted`, in document order.
pub fn select_sections<'s>(seg: &'s SegmentedOpinion, wanted: &BTreeSet<SectionLabel>) -> Vec<&'s Section> {
    seg.sections
        .iter()
        .filter(|s| s.label.as_ref().is_some_and(|l| wanted.contains(l)))
        .collect()
}

pub fn segment(doc: &Document, gateway: &Gateway) -> Result<SegmentedOpinion, SectioningError> {
    let prompts = PromptSet::default();
    Sectioner::new(gateway, &prompts, SectioningConfig::default()).segment(doc)
}

pub fn label_section(full_text: &str, section: &Section, gateway: &Gateway) -> Result<SectionLabel, SectioningError> {
    let prompts = PromptSet::default();
    Sectioner::new(gateway, &prompts, SectioningConfig::default()).label_section(full_text, section)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Completion, CompletionRequest, FnTransport, TransportError};
    use std::sync::Arc;

    fn gateway<F>(f: F) -> Gateway
    where
        F: Fn(&CompletionRequest) -> Result<Completion, TransportError> + Send + Sync + 'static,
    {
        Gateway::live(Arc::new(FnTransport(f)))
    }

    fn reply(sections: &[&str]) -> String {
        let items: Vec<_> = sections
            .iter()
            .enumerate()
            .map(|(i, c)| serde_json::json!({"index": i, "content": c}))
            .collect();
        serde_json::json!({ "result": items }).to_string()
    }

    #[test]
    fn label_parsing() {
        assert_eq!("Order/Summary".parse::<SectionLabel>().unwrap(), SectionLabel::OrderSummary);
        assert_eq!(
            "Analysis of Attorneys’ Fees".parse::<SectionLabel>().unwrap(),
            SectionLabel::AnalysisOfAttorneysFees
        );
        assert_eq!(SectionLabel::AnalysisOfAttorneysFees.as_str(), "Analysis of Attorneys' Fees");
        assert_eq!(
            "NEW_Discussion".parse::<SectionLabel>().unwrap(),
            SectionLabel::Custom("NEW_Discussion".into())
        );
        assert!("Discussion".parse::<SectionLabel>().is_err());
        assert!("NEW_".parse::<SectionLabel>().is_err());
        assert_eq!(SectionLabel::canonical().count(), 13);
    }

    #[test]
    fn labels_serialize_as_strings() {
        let s = serde_json::to_string(&SectionLabel::AnalysisOfReliefAndDamages).unwrap();
        assert_eq!(s, "\"Analysis of the Relief and Damages\"");
        assert!(serde_json::from_str::<SectionLabel>("\"Bogus\"").is_err());
    }

    #[test]
    fn single_section_accepted() {
        let text = "The court grants the motion.  Judgment for plaintiff.";
        let gw = gateway(move |_| Ok(Completion::text(reply(&["The court grants the motion. Judgment for plaintiff."]))));
        let seg = segment(&Document::new("d", "A v. B", text), &gw).unwrap();
        assert_eq!(seg.sections.len(), 1);
        assert!(seg.sections[0].label.is_none());
    }

    #[test]
    fn omitted_sentence_is_rejected() {
        let text = "First sentence. Second sentence. Third sentence.";
        let gw = gateway(|_| Ok(Completion::text(reply(&["First sentence.", "Third sentence."]))));
        match segment(&Document::new("d", "A v. B", text), &gw) {
            Err(SectioningError::ReassemblyMismatch { offset, .. }) => assert_eq!(offset, 16),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_opinion_rejected_before_call() {
        let gw = gateway(|_| panic!("no call expected"));
        assert!(matches!(
            segment(&Document::new("d", "A v. B", "   "), &gw),
            Err(SectioningError::EmptyOpinion)
        ));
    }

    #[test]
    fn unknown_label_reprompted_once_then_rejected() {
        let gw = gateway(|_| Ok(Completion::text(r#"{"result": "Discussion"}"#)));
        let section = Section {
            index: 0,
            label: None,
            content: "Some text.".into(),
        };
        let err = label_section("Some text.", &section, &gw).unwrap_err();
        assert!(matches!(err, SectioningError::InvalidLabel(l) if l == "Discussion"));
        assert_eq!(gw.upstream_calls(), 2);
    }

    #[test]
    fn unknown_label_prefixed_by_policy() {
        let gw = gateway(|_| Ok(Completion::text(r#"{"result": "Discussion"}"#)));
        let prompts = PromptSet::default();
        let config = SectioningConfig {
            unknown_label_policy: UnknownLabelPolicy::Prefix,
            ..SectioningConfig::default()
        };
        let s = Sectioner::new(&gw, &prompts, config);
        let section = Section {
            index: 0,
            label: None,
            content: "Some text.".into(),
        };
        assert_eq!(
            s.label_section("Some text.", &section).unwrap(),
            SectionLabel::Custom("NEW_Discussion".into())
        );
    }

    #[test]
    fn labeling_prompt_carries_full_and_target() {
        let gw = gateway(|req| {
            let p = &req.messages[0].content;
            assert!(p.contains(r#"{"full":"Full text here. Order entered.","target_section":"Order entered."}"#));
            Ok(Completion::text(r#"{"result": "Order/Summary"}"#))
        });
        let section = Section {
            index: 1,
            label: None,
            content: "Order entered.".into(),
        };
        assert_eq!(
            label_section("Full text here. Order entered.", &section, &gw).unwrap(),
            SectionLabel::OrderSummary
        );
    }

    #[test]
    fn select_is_stable_filter() {
        let seg = SegmentedOpinion {
            doc_id: "d".into(),
            sections: vec![
                Section { index: 0, label: Some(SectionLabel::Introduction), content: "a".into() },
                Section { index: 1, label: Some(SectionLabel::AnalysisOfReliefAndDamages), content: "b".into() },
                Section { index: 2, label: Some(SectionLabel::OrderSummary), content: "c".into() },
            ],
        };
        let all: BTreeSet<_> = SectionLabel::canonical().collect();
        assert_eq!(select_sections(&seg, &all).len(), 3);
        let damages = BTreeSet::from([SectionLabel::AnalysisOfReliefAndDamages]);
        let picked = select_sections(&seg, &damages);
        assert_eq!(picked.len(), 1);
        assert_eq!(picked[0].content, "b");
        assert!(select_sections(&seg, &BTreeSet::new()).is_empty());
    }

    #[test]
    fn chunks_cover_text_at_paragraph_breaks() {
        let text = "para one is here.\n\npara two is here.\n\n\npara three.";
        let chunks = chunk_paragraphs(text, 25);
        assert_eq!(chunks.concat(), text);
        assert!(chunks.len() >= 2);
        assert!(chunks[0].ends_with("\n\n"));
        assert_eq!(chunk_paragraphs(text, 10_000), vec![text]);
    }

    #[test]
    fn long_opinion_segmented_per_chunk() {
        let text = "Alpha paragraph.\n\nBeta paragraph.\n\nGamma paragraph.";
        let gw = gateway(|req| {
            let p = &req.messages[0].content;
            let doc = p.rsplit("The document:\n").next().unwrap();
            Ok(Completion::text(reply(&[doc.trim()])))
        });
        let prompts = PromptSet::default();
        let config = SectioningConfig {
            max_chunk_chars: 20,
            ..SectioningConfig::default()
        };
        let seg = Sectioner::new(&gw, &prompts, config)
            .segment(&Document::new("d", "A v. B", text))
            .unwrap();
        assert_eq!(seg.sections.len(), 3);
        assert_eq!(seg.sections[2].index, 2);
    }
}
