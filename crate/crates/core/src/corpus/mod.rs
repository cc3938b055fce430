//! Case ingestion: splitting raw export text into cases, pulling header
//! metadata and citations, and building the case/statute citation graph.

mod citations;
mod graph;
mod metadata;
mod split;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use citations::{extract_citations, Citation, CitationExtractor, CitationRules, CitationTarget};
pub use graph::{build_graph, doc_node_id, CitationGraph, GraphEdge, GraphNode, NodeKind};
pub use metadata::{extract_metadata, parse_date, MetadataExtractor, MetadataRules};
pub use split::{reassemble, split_cases, CaseBlock, Splitter, SplitterConfig};
pub use store::{
    load_corpus, load_gold_labels, read_documents, read_gold_labels, save_corpus, write_documents,
    write_gold_labels, GoldLabel,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("no case text found in input")]
    NoCasesFound,
    #[error("no opinion text remains after header parsing")]
    MissingOpinionBody,
    #[error("invalid {field} pattern: {message}")]
    InvalidPattern { field: String, message: String },
    #[error("citation references unknown document {0}")]
    DanglingSource(DocId),
    #[error("duplicate document id {0}")]
    DuplicateId(DocId),
    #[error("unknown document {0}")]
    UnknownDocument(DocId),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Stable identifier of a document within a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(pub String);

impl DocId {
    pub fn new(id: impl Into<String>) -> Self {
        DocId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DocId {
    fn from(s: &str) -> Self {
        DocId(s.to_string())
    }
}

/// One judicial opinion with its case metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocId,
    pub case_title: String,
    pub case_number: String,
    pub argued_date: Option<NaiveDate>,
    pub decided_date: Option<NaiveDate>,
    pub court_name: String,
    pub court_district: String,
    pub court_circuit: String,
    pub opinion_text: String,
    /// Date fields whose text could not be parsed, keyed by field name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unparsed_dates: BTreeMap<String, String>,
}

impl Document {
    /// Minimal document with the given id, title and opinion text.
    pub fn new(id: impl Into<String>, case_title: impl Into<String>, opinion_text: impl Into<String>) -> Self {
        Self {
            id: DocId(id.into()),
            case_title: case_title.into(),
            case_number: String::new(),
            argued_date: None,
            decided_date: None,
            court_name: String::new(),
            court_district: String::new(),
            court_circuit: String::new(),
            opinion_text: opinion_text.into(),
            unparsed_dates: BTreeMap::new(),
        }
    }
}

pub type FeatureId = String;

/// Documents plus expert gold labels (`doc → feature → label`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    gold_labels: BTreeMap<DocId, BTreeMap<FeatureId, bool>>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::default();
        for doc in documents {
            corpus.push(doc)?;
        }
        Ok(corpus)
    }

    pub fn push(&mut self, doc: Document) -> Result<(), CorpusError> {
        if self.get(&doc.id).is_some() {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        self.documents.push(doc);
        Ok(())
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &DocId) -> Option<&Document> {
        self.documents.iter().find(|d| &d.id == id)
    }

    pub fn ids(&self) -> BTreeSet<&DocId> {
        self.documents.iter().map(|d| &d.id).collect()
    }

    pub fn set_gold(&mut self, doc: &DocId, feature: &str, label: bool) -> Result<(), CorpusError> {
        if self.get(doc).is_none() {
            return Err(CorpusError::UnknownDocument(doc.clone()));
        }
        self.gold_labels
            .entry(doc.clone())
            .or_default()
            .insert(feature.to_string(), label);
        Ok(())
    }

    pub fn attach_gold(&mut self, labels: &[GoldLabel]) -> Result<(), CorpusError> {
        for l in labels {
            self.set_gold(&l.doc_id, &l.feature_id, l.label)?;
        }
        Ok(())
    }

    pub fn gold(&self, doc: &DocId, feature: &str) -> Option<bool> {
        self.gold_labels.get(doc)?.get(feature).copied()
    }

    pub fn gold_labels(&self) -> &BTreeMap<DocId, BTreeMap<FeatureId, bool>> {
        &self.gold_labels
    }

    /// Gold labels for one feature, in document order.
    pub fn gold_for_feature(&self, feature: &str) -> Vec<(DocId, bool)> {
        self.documents
            .iter()
            .filter_map(|d| self.gold(&d.id, feature).map(|g| (d.id.clone(), g)))
            .collect()
    }
}
