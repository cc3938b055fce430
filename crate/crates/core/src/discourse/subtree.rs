use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DiscourseError, EduId, RstNode, RstTree};

/// Evidence subtree: the lowest common ancestor of the requested EDUs with
/// only the branches leading to them. Node spans, roles and relations are
/// copied from the source tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RstSubtree {
    pub root: RstNode,
    pub covered_edus: BTreeSet<EduId>,
}

impl RstSubtree {
    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }
}

pub fn extract_subtree(tree: &RstTree, edu_ids: &BTreeSet<EduId>) -> Result<RstSubtree, DiscourseError> {
    let (Some(&lo), Some(&hi)) = (edu_ids.first(), edu_ids.last()) else {
        return Err(DiscourseError::EmptySelection);
    };
    for &id in edu_ids {
        tree.edu(id)?;
    }
    let mut lca = &tree.root;
    while let Some(c) = lca.children.iter().find(|c| c.span.contains(lo) && c.span.contains(hi)) {
        lca = c;
    }
    Ok(RstSubtree {
        root: prune(lca, edu_ids),
        covered_edus: edu_ids.clone(),
    })
}

fn prune(node: &RstNode, ids: &BTreeSet<EduId>) -> RstNode {
    RstNode {
        span: node.span,
        nuclearity: node.nuclearity,
        relation: node.relation.clone(),
        children: node
            .children
            .iter()
            .filter(|c| ids.range(c.span.0..=c.span.1).next().is_some())
            .map(|c| prune(c, ids))
            .collect(),
    }
}

/// Checks that every subtree node matches a source node at the same place
/// and that the covered EDUs are exactly the subtree's leaves.
pub fn validate_subtree(sub: &RstSubtree, tree: &RstTree) -> Result<(), DiscourseError> {
    let mut anchor = &tree.root;
    while anchor.span != sub.root.span {
        anchor = anchor
            .children
            .iter()
            .find(|c| c.span.covers(&sub.root.span))
            .ok_or_else(|| DiscourseError::SubtreeMismatch("$".into()))?;
    }
    match_node(&sub.root, anchor, "$")?;
    let leaves: BTreeSet<EduId> = sub.root.leaf_ids().into_iter().collect();
    if leaves != sub.covered_edus || sub.covered_edus.iter().any(|&id| tree.edu(id).is_err()) {
        return Err(DiscourseError::SubtreeMismatch("covered_edus".into()));
    }
    Ok(())
}

fn match_node(sub: &RstNode, src: &RstNode, path: &str) -> Result<(), DiscourseError> {
    if !sub.same_label(src) || sub.is_leaf() != src.is_leaf() {
        return Err(DiscourseError::SubtreeMismatch(path.into()));
    }
    for (i, c) in sub.children.iter().enumerate() {
        let s = src
            .children
            .iter()
            .find(|s| s.span == c.span)
            .ok_or_else(|| DiscourseError::SubtreeMismatch(format!("{path}.children[{i}]")))?;
        match_node(c, s, &format!("{path}.children[{i}]"))?;
    }
    Ok(())
}
