use serde::{Deserialize, Serialize};

use super::{DiscourseError, EduId, Nuclearity, RstNode, RstTree, Span};
use crate::gateway::{ChatMessage, Gateway, ModelSettings};
use crate::prompts::{self, PromptSet};
use crate::text;

/// Soft word limit for verbalized explanations.
pub const WORD_LIMIT: usize = 150;

/// Words kept when a span is summarized in a rendered path.
const SUMMARY_WORDS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub child_span: Span,
    pub relation: String,
    pub nuclearity: Nuclearity,
    pub parent_span: Span,
}

/// Relations from a target EDU up to the root, nearest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedPath {
    pub target_edu: EduId,
    pub steps: Vec<PathStep>,
}

pub fn path_to_root(tree: &RstTree, edu_id: EduId) -> Result<LinearizedPath, DiscourseError> {
    tree.edu(edu_id)?;
    let mut chain: Vec<&RstNode> = vec![&tree.root];
    let mut node = &tree.root;
    while let Some(next) = node.children.iter().find(|c| c.span.contains(edu_id)) {
        chain.push(next);
        node = next;
    }
    let steps = chain
        .windows(2)
        .rev()
        .map(|w| PathStep {
            child_span: w[1].span,
            relation: w[1].relation.clone().unwrap_or_default(),
            nuclearity: w[1].nuclearity.unwrap_or(Nuclearity::Nucleus),
            parent_span: w[0].span,
        })
        .collect();
    Ok(LinearizedPath {
        target_edu: edu_id,
        steps,
    })
}

fn summary(tree: &RstTree, span: Span) -> String {
    let full = tree.span_text(span);
    if text::word_count(&full) <= SUMMARY_WORDS {
        full
    } else {
        format!("{}...", text::first_words(&full, SUMMARY_WORDS))
    }
}

/// One line per step, target first:
/// `"<child text>" --<relation> (<nuclearity>)--> "<parent summary>"`.
pub fn render_path(path: &LinearizedPath, tree: &RstTree) -> String {
    if path.steps.is_empty() {
        return format!("\"{}\"", summary(tree, Span(path.target_edu, path.target_edu)));
    }
    path.steps
        .iter()
        .map(|s| {
            format!(
                "\"{}\" --{} ({})--> \"{}\"",
                summary(tree, s.child_span),
                s.relation,
                s.nuclearity,
                summary(tree, s.parent_span)
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Turns rendered paths into short natural-language explanations.
pub struct Verbalizer<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    model: ModelSettings,
    word_limit: usize,
}

impl<'a> Verbalizer<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a PromptSet, model: ModelSettings) -> Self {
        Self {
            gateway,
            prompts,
            model,
            word_limit: WORD_LIMIT,
        }
    }

    /// Asks once for a shorter answer when the limit is exceeded, then
    /// truncates.
    pub fn verbalize(&self, path: &LinearizedPath, tree: &RstTree, target_text: &str) -> Result<String, DiscourseError> {
        let prompt = self.prompts.linearization().render(&[
            (prompts::TREE_OF_DISCOURSE, &render_path(path, tree)),
            (prompts::TARGET_TEXT_SPAN, target_text),
        ])?;
        let mut request = self.model.prompt(prompt);
        let first = self.gateway.complete(&request)?.text.trim().to_string();
        if text::word_count(&first) <= self.word_limit {
            return Ok(first);
        }
        request.messages.push(ChatMessage::assistant(first));
        request.messages.push(ChatMessage::user(format!(
            "The explanation is too long. Rewrite it in at most {} words.",
            self.word_limit
        )));
        let second = self.gateway.complete(&request)?.text.trim().to_string();
        let n = text::word_count(&second);
        if n <= self.word_limit {
            return Ok(second);
        }
        log::warn!(
            "explanation for EDU {} still has {n} words after repair; truncating",
            path.target_edu
        );
        Ok(text::first_words(&second, self.word_limit))
    }
}

pub fn verbalize(
    path: &LinearizedPath,
    tree: &RstTree,
    target_text: &str,
    gateway: &Gateway,
) -> Result<String, DiscourseError> {
    let prompts = PromptSet::default();
    Verbalizer::new(gateway, &prompts, ModelSettings::default()).verbalize(path, tree, target_text)
}

#[cfg(test)]
mod tests {
    use super::super::{fallback_tree, sample_tree, split_edus};
    use super::*;
    use crate::gateway::{Completion, FnTransport};
    use std::sync::Arc;

    #[test]
    fn single_edu_path_is_empty() {
        let t = fallback_tree("d".into(), split_edus("Only one sentence here.")).unwrap();
        let p = path_to_root(&t, 1).unwrap();
        assert!(p.steps.is_empty());
        assert_eq!(render_path(&p, &t), "\"Only one sentence here.\"");
    }

    #[test]
    fn sample_edu_one_explains_edu_two() {
        let t = sample_tree();
        let p = path_to_root(&t, 1).unwrap();
        assert_eq!(p.steps[0].relation, "explanation");
        assert_eq!(p.steps[0].parent_span, Span(1, 2));
        assert_eq!(p.steps.last().unwrap().parent_span, t.root.span);
        for w in p.steps.windows(2) {
            assert_eq!(w[0].parent_span, w[1].child_span);
        }
        let r = render_path(&p, &t);
        assert!(r.contains("--explanation (satellite)-->"));
        assert_eq!(r.lines().count(), p.steps.len());
        assert_eq!(r, render_path(&p, &t));
    }

    #[test]
    fn unknown_edu() {
        let t = sample_tree();
        assert!(matches!(path_to_root(&t, 0), Err(DiscourseError::UnknownEdu(0))));
        assert!(matches!(path_to_root(&t, 10), Err(DiscourseError::UnknownEdu(10))));
    }

    #[test]
    fn long_explanation_repaired_once() {
        let long = "word ".repeat(200);
        let gw = Gateway::live(Arc::new(FnTransport(move |req: &crate::gateway::CompletionRequest| {
            if req.messages.len() == 1 {
                Ok(Completion::text(long.clone()))
            } else {
                Ok(Completion::text("A short explanation."))
            }
        })));
        let t = sample_tree();
        let p = path_to_root(&t, 1).unwrap();
        assert_eq!(verbalize(&p, &t, "x", &gw).unwrap(), "A short explanation.");
        assert_eq!(gw.upstream_calls(), 2);
    }

    #[test]
    fn persistent_overlength_truncated() {
        let gw = Gateway::live(Arc::new(FnTransport(|_: &crate::gateway::CompletionRequest| {
            Ok(Completion::text("word ".repeat(300)))
        })));
        let t = sample_tree();
        let p = path_to_root(&t, 3).unwrap();
        let out = verbalize(&p, &t, "x", &gw).unwrap();
        assert_eq!(text::word_count(&out), WORD_LIMIT);
        assert_eq!(gw.upstream_calls(), 2);
    }
}
