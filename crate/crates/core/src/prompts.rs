//! Prompt templates with `{{Placeholder}}` substitution.
//!
//! The built-in templates are compiled in from `templates/`; a directory with
//! files of the same names can override any of them at runtime.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template {template}: no value for placeholder {{{{{name}}}}}")]
    MissingValue { template: String, name: String },
    #[error("template {template}: value supplied for unknown placeholder {name:?}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template {template}: unterminated placeholder at byte {offset}")]
    Unterminated { template: String, offset: usize },
    #[error("cannot read template {path}: {message}")]
    Io { path: String, message: String },
}

pub const JUDICIAL_OPINION: &str = "Judicial Opinion";
pub const SECTION_LABEL_DEFINITIONS: &str = "Section Label Definitions";
pub const SECTION_CONTENT: &str = "Section Content";
pub const LINEARIZED_TOD: &str = "Linearized Tree-Of-Discourse";
pub const TREE_OF_DISCOURSE: &str = "Tree-Of-Discourse";
pub const TARGET_TEXT_SPAN: &str = "Target Text Span";
pub const PLAN_PROMPT: &str = "Plan Prompt";
pub const FEATURE_DEFINITION: &str = "Feature Definition";
pub const AVAILABLE_INPUTS: &str = "Available Inputs";
pub const PLAN_STEP: &str = "Plan Step";
pub const PRIOR_FINDINGS: &str = "Prior Findings";
pub const FAILURES: &str = "Failures";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

#[derive(Debug)]
enum Piece<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Result<Self, TemplateError> {
        let t = Self {
            name: name.into(),
            text: text.into(),
        };
        t.pieces()?;
        Ok(t)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Distinct placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for piece in self.pieces().expect("validated at construction") {
            if let Piece::Slot(name) = piece {
                if !seen.contains(&name) {
                    seen.push(name);
                }
            }
        }
        seen
    }

    fn pieces(&self) -> Result<Vec<Piece<'_>>, TemplateError> {
        let mut out = Vec::new();
        let mut rest = self.text.as_str();
        let mut consumed = 0;
        while let Some(open) = rest.find("{{") {
            let after = &rest[open + 2..];
            let close = after.find("}}").ok_or_else(|| TemplateError::Unterminated {
                template: self.name.clone(),
                offset: consumed + open,
            })?;
            out.push(Piece::Literal(&rest[..open]));
            out.push(Piece::Slot(&after[..close]));
            let advance = open + 2 + close + 2;
            consumed += advance;
            rest = &rest[advance..];
        }
        out.push(Piece::Literal(rest));
        Ok(out)
    }

    /// Substitutes every placeholder in one pass; inserted values are never
    /// rescanned, so opinion text containing braces is safe.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let placeholders = self.placeholders();
        if let Some((name, _)) = values.iter().find(|(n, _)| !placeholders.contains(n)) {
            return Err(TemplateError::UnknownPlaceholder {
                template: self.name.clone(),
                name: (*name).to_string(),
            });
        }
        let mut out = String::with_capacity(self.text.len());
        for piece in self.pieces()? {
            match piece {
                Piece::Literal(s) => out.push_str(s),
                Piece::Slot(name) => {
                    let value = values.iter().find(|(n, _)| *n == name).ok_or_else(|| {
                        TemplateError::MissingValue {
                            template: self.name.clone(),
                            name: name.to_string(),
                        }
                    })?;
                    out.push_str(value.1);
                }
            }
        }
        Ok(out)
    }
}

macro_rules! builtin {
    ($($file:literal),* $(,)?) => {
        &[$(($file, include_str!(concat!("../templates/", $file, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin![
    "section_segmentation",
    "section_labeling",
    "label_prediction",
    "label_prediction_cot",
    "label_prediction_tod",
    "tod_linearization",
    "plan_seed",
    "plan_generation",
    "plan_step",
    "plan_reflection",
    "plan_revision",
    "chunk_summary",
];

/// The full set of prompts the pipeline uses, keyed by file stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(name, text)| {
                let t = PromptTemplate::new(*name, *text).expect("built-in templates are well formed");
                (name.to_string(), t)
            })
            .collect();
        Self { templates }
    }
}

impl PromptSet {
    /// Built-ins, with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::default();
        for name in BUILTIN.iter().map(|(n, _)| *n) {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
                set.templates.insert(name.to_string(), PromptTemplate::new(name, text)?);
            }
        }
        Ok(set)
    }

    pub fn get(&self, name: &str) -> &PromptTemplate {
        self.templates
            .get(name)
            .unwrap_or_else(|| panic!("unknown prompt template {name}"))
    }

    pub fn segmentation(&self) -> &PromptTemplate {
        self.get("section_segmentation")
    }
    pub fn labeling(&self) -> &PromptTemplate {
        self.get("section_labeling")
    }
    pub fn label_prediction(&self) -> &PromptTemplate {
        self.get("label_prediction")
    }
    pub fn label_prediction_cot(&self) -> &PromptTemplate {
        self.get("label_prediction_cot")
    }
    pub fn label_prediction_tod(&self) -> &PromptTemplate {
        self.get("label_prediction_tod")
    }
    pub fn linearization(&self) -> &PromptTemplate {
        self.get("tod_linearization")
    }
}
