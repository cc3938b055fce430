use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Citation, CitationTarget, Corpus, CorpusError, DocId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Case,
    Statute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    pub raw_text: String,
}

/// Heterogeneous citation graph: corpus opinions and cited cases are `case`
/// nodes, cited statutes are `statute` nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
}

impl CitationGraph {
    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Checks that every edge endpoint exists and no edge is a self-loop.
    pub fn validate(&self) -> Result<(), String> {
        for e in &self.edges {
            if self.node(&e.src).is_none() || self.node(&e.dst).is_none() {
                return Err(format!("edge {} -> {} has a missing endpoint", e.src, e.dst));
            }
            if e.src == e.dst {
                return Err(format!("self-loop on {}", e.src));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }
}

pub fn doc_node_id(id: &DocId) -> String {
    format!("doc:{id}")
}

fn normalize_title(title: &str) -> String {
    title
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '&')
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Builds the graph with one node per corpus document, per distinct cited
/// case (by reporter citation) and per distinct statute key. Edge
/// multiplicity is preserved. A document citing its own title is dropped with
/// a warning.
pub fn build_graph(corpus: &Corpus, citations: &[Citation]) -> Result<CitationGraph, CorpusError> {
    let mut nodes: BTreeMap<String, GraphNode> = BTreeMap::new();
    let mut by_title: HashMap<String, &DocId> = HashMap::new();
    for doc in corpus.documents() {
        let id = doc_node_id(&doc.id);
        nodes.insert(
            id.clone(),
            GraphNode {
                id,
                kind: NodeKind::Case,
                label: doc.case_title.clone(),
            },
        );
        if !doc.case_title.trim().is_empty() {
            by_title.entry(normalize_title(&doc.case_title)).or_insert(&doc.id);
        }
    }

    let mut edges = Vec::with_capacity(citations.len());
    for c in citations {
        if corpus.get(&c.source_doc).is_none() {
            return Err(CorpusError::DanglingSource(c.source_doc.clone()));
        }
        let src = doc_node_id(&c.source_doc);
        let dst = match &c.target {
            CitationTarget::Statute { key } => {
                let id = format!("statute:{key}");
                nodes.entry(id.clone()).or_insert_with(|| GraphNode {
                    id: id.clone(),
                    kind: NodeKind::Statute,
                    label: key.clone(),
                });
                id
            }
            CitationTarget::Case { title, reporter } => match by_title.get(&normalize_title(title)) {
                Some(doc) => doc_node_id(doc),
                None => {
                    let key: String = reporter.chars().filter(|c| !c.is_whitespace()).collect();
                    let id = format!("case:{key}");
                    nodes.entry(id.clone()).or_insert_with(|| GraphNode {
                        id: id.clone(),
                        kind: NodeKind::Case,
                        label: title.clone(),
                    });
                    id
                }
            },
        };
        if dst == src {
            log::warn!("dropping self-citation in {}: {:?}", c.source_doc, c.raw_text);
            continue;
        }
        edges.push(GraphEdge {
            src,
            dst,
            raw_text: c.raw_text.clone(),
        });
    }
    Ok(CitationGraph {
        nodes: nodes.into_values().collect(),
        edges,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;

    fn statute(doc: &str, key: &str) -> Citation {
        Citation {
            source_doc: doc.into(),
            target: CitationTarget::Statute { key: key.into() },
            raw_text: key.into(),
            offset: 0,
        }
    }

    #[test]
    fn shared_statute_gives_three_nodes_two_edges() {
        let corpus = Corpus::new(vec![
            Document::new("a", "A v. B", "t"),
            Document::new("b", "C v. D", "t"),
        ])
        .unwrap();
        let g = build_graph(&corpus, &[statute("a", "17USC504(c)"), statute("b", "17USC504(c)")]).unwrap();
        assert_eq!(g.nodes.len(), 3);
        assert_eq!(g.edges.len(), 2);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn empty_corpus_empty_graph() {
        let g = build_graph(&Corpus::default(), &[]).unwrap();
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn self_citation_dropped() {
        let corpus = Corpus::new(vec![Document::new("a", "Acme Corp. v. Beta, Inc.", "t")]).unwrap();
        let c = Citation {
            source_doc: "a".into(),
            target: CitationTarget::Case {
                title: "Acme Corp. v. Beta, Inc.".into(),
                reporter: "1 F.3d 2".into(),
            },
            raw_text: "Acme Corp. v. Beta, Inc., 1 F.3d 2".into(),
            offset: 0,
        };
        let g = build_graph(&corpus, &[c]).unwrap();
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn cross_corpus_citation_links_documents() {
        let corpus = Corpus::new(vec![
            Document::new("a", "Acme Corp. v. Beta, Inc.", "t"),
            Document::new("b", "Gamma v. Delta", "t"),
        ])
        .unwrap();
        let c = Citation {
            source_doc: "b".into(),
            target: CitationTarget::Case {
                title: "Acme Corp. v. Beta, Inc.".into(),
                reporter: "1 F.3d 2".into(),
            },
            raw_text: "x".into(),
            offset: 0,
        };
        let g = build_graph(&corpus, &[c]).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges[0].dst, "doc:a");
    }

    #[test]
    fn dangling_source_rejected() {
        let err = build_graph(&Corpus::default(), &[statute("ghost", "17USC501")]).unwrap_err();
        assert!(matches!(err, CorpusError::DanglingSource(_)));
    }

    #[test]
    fn export_shape() {
        let corpus = Corpus::new(vec![Document::new("a", "A v. B", "t")]).unwrap();
        let g = build_graph(&corpus, &[statute("a", "17USC505")]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["nodes"][0]["kind"], "case");
        assert_eq!(v["edges"][0]["src"], "doc:a");
        assert_eq!(v["edges"][0]["dst"], "statute:17USC505");
        assert_eq!(v["edges"][0]["raw_text"], "17USC505");
    }
}
