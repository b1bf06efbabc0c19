//! Clause matching: merge a dependent into its head unless the arc is a core
//! argument, so that clause skeletons survive pooling.

use std::collections::BTreeSet;

use super::MatchingMatrix;
use crate::graph::{EdgeKind, LabeledGraph, NodeId};

/// UD relations that link a predicate to its core dependents.
pub const DEFAULT_CORE_ARGUMENTS: [&str; 8] = [
    "nsubj",
    "nsubj:pass",
    "dobj",
    "iobj",
    "csubj",
    "csubj:pass",
    "ccomp",
    "xcomp",
];

/// Which edges may carry a merge: every dependency label outside
/// `core_arguments`, plus coreference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClauseMatchConfig {
    pub core_arguments: BTreeSet<String>,
    pub merge_coreference: bool,
}

impl Default for ClauseMatchConfig {
    fn default() -> Self {
        ClauseMatchConfig {
            core_arguments: DEFAULT_CORE_ARGUMENTS.iter().map(|s| s.to_string()).collect(),
            merge_coreference: true,
        }
    }
}

impl ClauseMatchConfig {
    pub fn is_mergeable(&self, kind: &EdgeKind) -> bool {
        match kind {
            EdgeKind::Dependency(label) => !self.core_arguments.contains(label),
            EdgeKind::Coreference => self.merge_coreference,
            _ => false,
        }
    }
}

/// One round of clause matching.
pub fn clause_match(g: &LabeledGraph, cfg: &ClauseMatchConfig) -> MatchingMatrix {
    clause_match_graph(g, cfg).0
}

/// One round of clause matching, also returning the pooled typed graph.
///
/// Nodes are visited by ascending neighbor count (ties by index). A node
/// that has already absorbed another node this round is skipped. Otherwise
/// its incoming edges are scanned in insertion order and the node merges
/// into the first head reached through a mergeable edge; coreference edges
/// count as incoming from either side. Edges of a merged node move to its
/// head, and self-loops created by the move are dropped.
pub fn clause_match_graph(
    g: &LabeledGraph,
    cfg: &ClauseMatchConfig,
) -> (MatchingMatrix, LabeledGraph) {
    let n = g.node_count();
    let degrees = g.degrees();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (degrees[v], v));

    // owner[v] = node that currently stands for v. Absorbers never merge in
    // the same round, so one hop always reaches a live node.
    let mut owner: Vec<usize> = (0..n).collect();
    let mut absorbed_any = vec![false; n];

    for vi in order {
        if absorbed_any[vi] {
            continue;
        }
        let head = g.edges().iter().find_map(|e| {
            if !cfg.is_mergeable(&e.kind) {
                return None;
            }
            let (s, d) = (owner[e.src.0], owner[e.dst.0]);
            if s == d {
                return None;
            }
            match e.kind {
                EdgeKind::Dependency(_) => (d == vi).then_some(s),
                _ => {
                    if d == vi {
                        Some(s)
                    } else if s == vi {
                        Some(d)
                    } else {
                        None
                    }
                }
            }
        });
        if let Some(vj) = head {
            for o in owner.iter_mut() {
                if *o == vi {
                    *o = vj;
                }
            }
            absorbed_any[vj] = true;
        }
    }

    let matching = MatchingMatrix::from_leaders(&owner);
    let pooled = transfer_edges(g, &matching);
    (matching, pooled)
}

/// Maps every edge through the matching, dropping self-loops and keeping
/// each surviving edge's type.
pub(crate) fn transfer_edges(g: &LabeledGraph, m: &MatchingMatrix) -> LabeledGraph {
    let edges = g.edges().iter().filter_map(|e| {
        let (s, d) = (m.supernode_of(e.src.0), m.supernode_of(e.dst.0));
        (s != d).then(|| (s, d, e.kind.clone()))
    });
    LabeledGraph::new(m.n_coarse(), edges).expect("matching maps into range")
}

/// Every merge in `m` that crossed a single fine edge whose type is in the
/// core set. Used to check that core arguments are never merged over.
pub fn merges_across_core_edges(
    g: &LabeledGraph,
    m: &MatchingMatrix,
    cfg: &ClauseMatchConfig,
) -> Vec<(NodeId, NodeId)> {
    let members = m.members();
    let mut bad = Vec::new();
    for group in members.iter().filter(|g| g.len() > 1) {
        // a group is legal if it is connected by mergeable edges alone
        let mut seen = BTreeSet::from([group[0]]);
        let mut stack = vec![group[0]];
        while let Some(u) = stack.pop() {
            for e in g.edges() {
                if !cfg.is_mergeable(&e.kind) {
                    continue;
                }
                let other = if e.src.0 == u {
                    e.dst.0
                } else if e.dst.0 == u {
                    e.src.0
                } else {
                    continue;
                };
                if m.supernode_of(other) == m.supernode_of(u) && seen.insert(other) {
                    stack.push(other);
                }
            }
        }
        if seen.len() != group.len() {
            for &v in group {
                if !seen.contains(&v) {
                    bad.push((NodeId(group[0]), NodeId(v)));
                }
            }
        }
    }
    bad
}
