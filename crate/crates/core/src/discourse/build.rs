use std::sync::LazyLock;

use rand::seq::IndexedRandom;
use rand::Rng;
use regex::Regex;

use super::{DiscourseError, Edu, EduId, Nuclearity, RstNode, RstTree, Span, CANONICAL_RELATIONS};
use crate::corpus::DocId;

static SENTENCE_END: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"[.!?]["'\u{201D}\u{2019})\]]*\s+"#).expect("valid regex"));

/// Tokens ending in a period that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "v.", "vs.", "u.s.", "u.s.c.", "no.", "nos.", "inc.", "co.", "corp.", "ltd.", "mr.", "ms.", "dr.", "f.", "supp.",
    "cir.", "e.g.", "i.e.", "id.", "st.", "tel.", "serv.", "ass'n.", "int'l.", "dist.", "ct.", "app.", "civ.", "fed.",
    "cal.", "haw.", "n.y.", "ill.", "sec.", "mfg.", "bros.", "prods.", "publ'g.", "ent.", "n.d.", "s.d.", "e.d.",
    "w.d.", "d.",
];

/// Sentence-level EDUs for text that has no parser output. Breaks after
/// terminal punctuation followed by an uppercase letter, a digit or a quote,
/// skipping common legal abbreviations.
pub fn split_edus(text: &str) -> Vec<Edu> {
    let mut pieces = Vec::new();
    let mut start = 0;
    for m in SENTENCE_END.find_iter(text) {
        let before = &text[start..m.start() + 1];
        let last_token = before.split_whitespace().last().unwrap_or("").to_lowercase();
        let last_token = last_token.trim_start_matches(['(', '"', '\'']);
        let next = text[m.end()..].chars().next();
        let starts_sentence = next.is_some_and(|c| c.is_uppercase() || c.is_ascii_digit() || c == '"' || c == '\u{201C}');
        let is_initial = last_token.len() == 2 && last_token.starts_with(|c: char| c.is_alphabetic());
        if !starts_sentence || ABBREVIATIONS.contains(&last_token) || is_initial {
            continue;
        }
        pieces.push(text[start..m.end()].trim());
        start = m.end();
    }
    pieces.push(text[start..].trim());
    pieces
        .into_iter()
        .filter(|p| !p.is_empty())
        .enumerate()
        .map(|(i, t)| Edu {
            id: i + 1,
            text: t.to_string(),
        })
        .collect()
}

/// Right-branching tree: each internal node has the leftmost EDU as nucleus
/// and the remainder as an elaborating satellite.
pub fn fallback_tree(doc_id: DocId, edus: Vec<Edu>) -> Result<RstTree, DiscourseError> {
    let n = edus.len();
    if n == 0 {
        return Err(DiscourseError::Format("fallback tree needs at least one EDU".into()));
    }
    let mut node = RstNode {
        span: Span(n, n),
        nuclearity: None,
        relation: None,
        children: Vec::new(),
    };
    for lo in (1..n).rev() {
        node.nuclearity = Some(Nuclearity::Satellite);
        node.relation = Some("elaboration".into());
        node = RstNode {
            span: Span(lo, n),
            nuclearity: None,
            relation: None,
            children: vec![RstNode::leaf(lo, Nuclearity::Nucleus, "span"), node],
        };
    }
    RstTree::new(doc_id, edus, node)
}

/// Random valid tree over `n` EDUs with 2-3 children per internal node,
/// random nuclearity (at least one nucleus) and canonical relations.
pub fn random_tree<R: Rng>(doc_id: DocId, n: usize, rng: &mut R) -> RstTree {
    assert!(n >= 1, "random tree needs at least one EDU");
    let edus = (1..=n)
        .map(|id| Edu {
            id,
            text: format!("unit {id} text"),
        })
        .collect();
    let mut root = random_node(Span(1, n), rng);
    root.nuclearity = None;
    root.relation = None;
    RstTree::new(doc_id, edus, root).expect("generator produces valid trees")
}

fn random_node<R: Rng>(span: Span, rng: &mut R) -> RstNode {
    let Span(lo, hi) = span;
    let mut node = RstNode {
        span,
        nuclearity: Some(Nuclearity::Nucleus),
        relation: Some("span".into()),
        children: Vec::new(),
    };
    if lo == hi {
        return node;
    }
    let arity = rng.random_range(2..=3.min(hi - lo + 1));
    let mut cuts: Vec<EduId> = Vec::new();
    while cuts.len() < arity - 1 {
        let c = rng.random_range(lo + 1..=hi);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut starts = vec![lo];
    starts.extend(&cuts);
    let mut ends: Vec<EduId> = cuts.iter().map(|c| c - 1).collect();
    ends.push(hi);
    let multinuclear = rng.random_bool(0.2);
    let nucleus = rng.random_range(0..arity);
    for (i, (s, e)) in starts.into_iter().zip(ends).enumerate() {
        let mut child = random_node(Span(s, e), rng);
        if multinuclear {
            child.nuclearity = Some(Nuclearity::Nucleus);
            child.relation = Some("joint".into());
        } else if i == nucleus {
            child.nuclearity = Some(Nuclearity::Nucleus);
            child.relation = Some("span".into());
        } else {
            child.nuclearity = Some(Nuclearity::Satellite);
            child.relation = Some(CANONICAL_RELATIONS.choose(rng).expect("non-empty").to_string());
        }
        node.children.push(child);
    }
    node
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn internal_count(n: &RstNode) -> usize {
        if n.is_leaf() {
            0
        } else {
            1 + n.children.iter().map(internal_count).sum::<usize>()
        }
    }

    #[test]
    fn fallback_shapes() {
        let one = fallback_tree("d".into(), split_edus("Just one.")).unwrap();
        assert!(one.root.is_leaf());
        let three = fallback_tree("d".into(), split_edus("One. Two. Three.")).unwrap();
        assert_eq!(three.root.span, Span(1, 3));
        assert_eq!(three.root.children[0].span, Span(1, 1));
        assert_eq!(three.root.children[1].span, Span(2, 3));
        assert_eq!(three.root.children[1].relation.as_deref(), Some("elaboration"));
        for n in 1..30 {
            let edus = (1..=n).map(|id| Edu { id, text: format!("s{id}") }).collect();
            let t = fallback_tree("d".into(), edus).unwrap();
            assert_eq!(internal_count(&t.root), n - 1);
        }
        assert!(fallback_tree("d".into(), Vec::new()).is_err());
    }

    #[test]
    fn splitter_respects_abbreviations() {
        let edus = split_edus("See Feist Publ'ns, Inc. v. Rural Tel. Serv. Co., 499 U.S. 340 (1991). The award stands. Under 17 U.S.C. 504(c) damages apply.");
        let texts: Vec<_> = edus.iter().map(|e| e.text.as_str()).collect();
        assert_eq!(texts.len(), 3, "{texts:?}");
        assert!(texts[1] == "The award stands.");
    }

    #[test]
    fn random_trees_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=40 {
            let t = random_tree("r".into(), n, &mut rng);
            assert_eq!(t.root.leaf_ids(), (1..=n).collect::<Vec<_>>());
        }
    }
}
