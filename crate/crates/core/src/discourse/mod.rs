//! RST discourse trees over elementary discourse units (EDUs).
//!
//! Trees arrive from an external parser as JSON, are validated once on
//! parse, and are immutable afterwards.

mod build;
mod path;
mod subtree;

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocId;
use crate::gateway::GatewayError;
use crate::prompts::TemplateError;

pub use build::{fallback_tree, random_tree, split_edus};
pub use path::{path_to_root, render_path, verbalize, LinearizedPath, PathStep, Verbalizer, WORD_LIMIT};
pub use subtree::{extract_subtree, validate_subtree, RstSubtree};

pub type EduId = usize;

/// The classic RST relation inventory. Other names are accepted with a warning.
pub const CANONICAL_RELATIONS: [&str; 23] = [
    "antithesis",
    "background",
    "circumstance",
    "concession",
    "condition",
    "elaboration",
    "enablement",
    "evaluation",
    "evidence",
    "interpretation",
    "justify",
    "motivation",
    "non-volitional cause",
    "non-volitional result",
    "otherwise",
    "purpose",
    "restatement",
    "solutionhood",
    "summary",
    "volitional cause",
    "volitional result",
    "contrast",
    "joint",
];

/// Relation names that are structural rather than rhetorical.
const STRUCTURAL_RELATIONS: [&str; 3] = ["span", "sequence", "list"];

/// Relation names some parsers emit for the classic inventory.
const RELATION_ALIASES: [&str; 7] = ["explanation", "attribution", "cause", "comparison", "temporal", "topic-change", "same-unit"];

pub fn is_known_relation(name: &str) -> bool {
    let n = name.trim().to_lowercase();
    CANONICAL_RELATIONS.contains(&n.as_str())
        || STRUCTURAL_RELATIONS.contains(&n.as_str())
        || RELATION_ALIASES.contains(&n.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Gap,
    Overlap,
    NoNucleus,
    BadSpan,
}

impl fmt::Display for StructureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructureKind::Gap => "gap",
            StructureKind::Overlap => "overlap",
            StructureKind::NoNucleus => "no_nucleus",
            StructureKind::BadSpan => "bad_span",
        })
    }
}

#[derive(Debug, Error)]
pub enum DiscourseError {
    #[error("malformed tree: {0}")]
    Format(String),
    #[error("{kind} at {path}")]
    Structure { kind: StructureKind, path: String },
    #[error("unknown EDU {0}")]
    UnknownEdu(EduId),
    #[error("no EDUs requested")]
    EmptySelection,
    #[error("subtree does not match its source tree at {0}")]
    SubtreeMismatch(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// Inclusive EDU id range, serialized as `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span(pub EduId, pub EduId);

impl Span {
    pub fn lo(&self) -> EduId {
        self.0
    }

    pub fn hi(&self) -> EduId {
        self.1
    }

    pub fn contains(&self, id: EduId) -> bool {
        self.0 <= id && id <= self.1
    }

    pub fn covers(&self, other: &Span) -> bool {
        self.0 <= other.0 && other.1 <= self.1
    }

    pub fn len(&self) -> usize {
        self.1 + 1 - self.0
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == self.1 {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{}-{}", self.0, self.1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nuclearity {
    Nucleus,
    Satellite,
}

impl fmt::Display for Nuclearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nuclearity::Nucleus => "nucleus",
            Nuclearity::Satellite => "satellite",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edu {
    pub id: EduId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RstNode {
    pub span: Span,
    /// Role relative to the parent; absent on the root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuclearity: Option<Nuclearity>,
    /// Relation to the parent; absent on the root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<RstNode>,
}

impl RstNode {
    pub fn leaf(id: EduId, nuclearity: Nuclearity, relation: &str) -> Self {
        Self {
            span: Span(id, id),
            nuclearity: Some(nuclearity),
            relation: Some(relation.to_string()),
            children: Vec::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of nodes in this subtree, including itself.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(RstNode::node_count).sum::<usize>()
    }

    pub fn leaf_ids(&self) -> Vec<EduId> {
        let mut out = Vec::new();
        self.visit(&mut |n| {
            if n.is_leaf() {
                out.push(n.span.0);
            }
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a RstNode)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    /// Same span, role and relation; children are not compared.
    pub fn same_label(&self, other: &RstNode) -> bool {
        self.span == other.span && self.nuclearity == other.nuclearity && self.relation == other.relation
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RstTree {
    pub doc_id: DocId,
    pub edus: Vec<Edu>,
    pub root: RstNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeFormat {
    #[default]
    PipelineJson,
}

impl RstTree {
    /// Validates a tree assembled in code.
    pub fn new(doc_id: DocId, edus: Vec<Edu>, root: RstNode) -> Result<Self, DiscourseError> {
        let tree = RstTree { doc_id, edus, root };
        tree.validate()?;
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.edus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edus.is_empty()
    }

    pub fn edu(&self, id: EduId) -> Result<&Edu, DiscourseError> {
        id.checked_sub(1)
            .and_then(|i| self.edus.get(i))
            .ok_or(DiscourseError::UnknownEdu(id))
    }

    /// EDU texts of `span` joined by single spaces.
    pub fn span_text(&self, span: Span) -> String {
        self.edus
            .iter()
            .filter(|e| span.contains(e.id))
            .map(|e| e.text.trim())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tree serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), DiscourseError> {
        for (i, e) in self.edus.iter().enumerate() {
            if e.id != i + 1 {
                return Err(DiscourseError::Format(format!(
                    "EDU ids must be contiguous from 1; position {} has id {}",
                    i + 1,
                    e.id
                )));
            }
            if e.text.trim().is_empty() {
                return Err(DiscourseError::Format(format!("EDU {} has empty text", e.id)));
            }
        }
        if self.edus.is_empty() {
            return Err(DiscourseError::Format("tree has no EDUs".into()));
        }
        if self.root.span != Span(1, self.edus.len()) {
            return Err(DiscourseError::Structure {
                kind: StructureKind::BadSpan,
                path: "$".into(),
            });
        }
        validate_node(&self.root, "$", true)
    }
}

fn structure(kind: StructureKind, path: &str) -> DiscourseError {
    DiscourseError::Structure {
        kind,
        path: path.to_string(),
    }
}

fn validate_node(node: &RstNode, path: &str, is_root: bool) -> Result<(), DiscourseError> {
    let Span(lo, hi) = node.span;
    if lo == 0 || lo > hi {
        return Err(structure(StructureKind::BadSpan, path));
    }
    if !is_root {
        if node.nuclearity.is_none() {
            return Err(DiscourseError::Format(format!("{path}: nuclearity is required below the root")));
        }
        match node.relation.as_deref().map(str::trim) {
            None | Some("") => {
                return Err(DiscourseError::Format(format!("{path}: relation is required below the root")))
            }
            Some(r) if !is_known_relation(r) => log::warn!("{path}: unknown relation {r:?}"),
            Some(_) => {}
        }
    }
    if node.children.is_empty() {
        return if lo == hi { Ok(()) } else { Err(structure(StructureKind::BadSpan, path)) };
    }
    if lo == hi {
        return Err(structure(StructureKind::BadSpan, path));
    }
    let mut next = lo;
    for (i, c) in node.children.iter().enumerate() {
        let child_path = format!("{path}.children[{i}]");
        if c.span.0 > next {
            return Err(structure(StructureKind::Gap, &child_path));
        }
        if c.span.0 < next {
            return Err(structure(StructureKind::Overlap, &child_path));
        }
        if c.span.1 > hi {
            return Err(structure(StructureKind::BadSpan, &child_path));
        }
        next = c.span.1 + 1;
    }
    if next <= hi {
        return Err(structure(StructureKind::Gap, path));
    }
    for (i, c) in node.children.iter().enumerate() {
        validate_node(c, &format!("{path}.children[{i}]"), false)?;
    }
    if !node.children.iter().any(|c| c.nuclearity == Some(Nuclearity::Nucleus)) {
        return Err(structure(StructureKind::NoNucleus, path));
    }
    Ok(())
}

/// Parses and validates a serialized tree. Invalid input is an error; the
/// tree is never repaired.
pub fn parse_tree(serialized: &str, format: TreeFormat) -> Result<RstTree, DiscourseError> {
    match format {
        TreeFormat::PipelineJson => {
            let tree: RstTree =
                serde_json::from_str(serialized).map_err(|e| DiscourseError::Format(e.to_string()))?;
            tree.validate()?;
            Ok(tree)
        }
    }
}

pub fn write_trees<W: Write>(mut w: W, trees: &[RstTree]) -> std::io::Result<()> {
    for t in trees {
        w.write_all(t.to_json().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads one tree per line; errors name the 1-based line.
pub fn read_trees<R: BufRead>(reader: R) -> Result<Vec<RstTree>, DiscourseError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DiscourseError::Format(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let tree = parse_tree(&line, TreeFormat::PipelineJson).map_err(|e| match e {
            DiscourseError::Format(m) => DiscourseError::Format(format!("line {}: {m}", i + 1)),
            DiscourseError::Structure { kind, path } => DiscourseError::Structure {
                kind,
                path: format!("line {}: {path}", i + 1),
            },
            other => other,
        })?;
        out.push(tree);
    }
    Ok(out)
}

/// A nine-EDU opinion excerpt on statutory damages.
///
/// Topology: EDU 1 explains EDU 2; EDUs 3-8 discuss a precedent and
/// elaborate on 1-2; EDU 9 states the award.
pub fn sample_tree() -> RstTree {
    use Nuclearity::{Nucleus as N, Satellite as S};
    let texts = [
        "Because the defendant ignored repeated notices,",
        "the court finds the infringement willful.",
        "In a similar matter,",
        "the court of appeals affirmed an award",
        "near the statutory maximum",
        "where the infringer profited from the copies",
        "and continued after being sued.",
        "That reasoning applies with equal force here.",
        "Plaintiff is awarded $100,000 per work to deter future infringement.",
    ];
    let edus = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Edu {
            id: i + 1,
            text: t.to_string(),
        })
        .collect();
    let inner = |span: Span, nuc: Nuclearity, rel: &str, children: Vec<RstNode>| RstNode {
        span,
        nuclearity: Some(nuc),
        relation: Some(rel.to_string()),
        children,
    };
    let first = inner(
        Span(1, 2),
        N,
        "span",
        vec![RstNode::leaf(1, S, "explanation"), RstNode::leaf(2, N, "span")],
    );
    let precedent_core = inner(
        Span(4, 7),
        N,
        "span",
        vec![
            inner(
                Span(4, 5),
                N,
                "span",
                vec![RstNode::leaf(4, N, "span"), RstNode::leaf(5, S, "elaboration")],
            ),
            inner(
                Span(6, 7),
                S,
                "circumstance",
                vec![RstNode::leaf(6, N, "joint"), RstNode::leaf(7, N, "joint")],
            ),
        ],
    );
    let precedent = inner(
        Span(3, 8),
        S,
        "elaboration",
        vec![
            inner(
                Span(3, 7),
                N,
                "span",
                vec![RstNode::leaf(3, S, "circumstance"), precedent_core],
            ),
            RstNode::leaf(8, S, "evaluation"),
        ],
    );
    let body = inner(Span(1, 8), N, "span", vec![first, precedent]);
    let root = RstNode {
        span: Span(1, 9),
        nuclearity: None,
        relation: None,
        children: vec![body, RstNode::leaf(9, S, "summary")],
    };
    RstTree::new("sample".into(), edus, root).expect("sample tree is valid")
}
