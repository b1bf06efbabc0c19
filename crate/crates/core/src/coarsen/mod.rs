//! Graph pooling: matchings, coarsened adjacency and multilevel hierarchies.
//!
//! A matching assigns every fine node to exactly one supernode. Written as
//! the `n x m` 0/1 matrix `M`, the coarse adjacency is `Mᵀ A M`; we keep the
//! dense assignment vector instead of the matrix itself.

mod clause;
pub mod dot;
mod hierarchy;
mod hybrid;
mod random;

pub use clause::{
    clause_match, clause_match_graph, merges_across_core_edges, ClauseMatchConfig,
    DEFAULT_CORE_ARGUMENTS,
};
pub use hierarchy::{build_hierarchy, GraphHierarchy, HierarchyLevel, PoolingMethod};
pub use hybrid::{hybrid_match, nhem_match, normalized_edge_weight, sem_match};
pub use random::{random_match, random_match_with};

use thiserror::Error;

use crate::graph::AdjacencyMatrix;
use crate::numeric::Matrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CoarsenError {
    #[error("matching covers {matching} fine nodes but the matrix has {matrix}")]
    DimensionMismatch { matching: usize, matrix: usize },
    #[error("fine node {node} assigned to supernode {supernode}, but only {n_coarse} exist")]
    SupernodeOutOfRange {
        node: usize,
        supernode: usize,
        n_coarse: usize,
    },
    #[error("supernode {0} has no members")]
    EmptySupernode(usize),
    #[error("node {node} appears in more than one group")]
    OverlappingGroups { node: usize },
}

/// Partition of `n_fine` nodes into `n_coarse` supernodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchingMatrix {
    n_coarse: usize,
    assignment: Vec<usize>,
}

impl MatchingMatrix {
    pub fn identity(n: usize) -> Self {
        MatchingMatrix {
            n_coarse: n,
            assignment: (0..n).collect(),
        }
    }

    /// Validates that the assignment is onto `[0, n_coarse)`.
    pub fn from_assignment(assignment: Vec<usize>, n_coarse: usize) -> Result<Self, CoarsenError> {
        let mut used = vec![false; n_coarse];
        for (node, &s) in assignment.iter().enumerate() {
            if s >= n_coarse {
                return Err(CoarsenError::SupernodeOutOfRange {
                    node,
                    supernode: s,
                    n_coarse,
                });
            }
            used[s] = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(CoarsenError::EmptySupernode(empty));
        }
        Ok(MatchingMatrix {
            n_coarse,
            assignment,
        })
    }

    /// Builds a matching from disjoint groups; nodes not in any group become
    /// singletons. Supernodes are numbered by ascending smallest member.
    pub fn from_groups(n_fine: usize, groups: &[Vec<usize>]) -> Result<Self, CoarsenError> {
        let mut leader = vec![usize::MAX; n_fine];
        for g in groups {
            let Some(&min) = g.iter().min() else { continue };
            for &v in g {
                if v >= n_fine {
                    return Err(CoarsenError::DimensionMismatch {
                        matching: v + 1,
                        matrix: n_fine,
                    });
                }
                if leader[v] != usize::MAX {
                    return Err(CoarsenError::OverlappingGroups { node: v });
                }
                leader[v] = min;
            }
        }
        for (v, l) in leader.iter_mut().enumerate() {
            if *l == usize::MAX {
                *l = v;
            }
        }
        Ok(Self::from_leaders(&leader))
    }

    /// `leader[v]` names any representative of `v`'s group; supernodes are
    /// numbered by ascending smallest member.
    pub(crate) fn from_leaders(leader: &[usize]) -> Self {
        let n = leader.len();
        let mut min_member = vec![usize::MAX; n];
        for (v, &l) in leader.iter().enumerate() {
            min_member[l] = min_member[l].min(v);
        }
        let mut index_of = vec![usize::MAX; n];
        let mut n_coarse = 0;
        let mut assignment = vec![0; n];
        for v in 0..n {
            let key = min_member[leader[v]];
            if index_of[key] == usize::MAX {
                index_of[key] = n_coarse;
                n_coarse += 1;
            }
            assignment[v] = index_of[key];
        }
        MatchingMatrix {
            n_coarse,
            assignment,
        }
    }

    pub fn n_fine(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn supernode_of(&self, fine: usize) -> usize {
        self.assignment[fine]
    }

    pub fn is_identity(&self) -> bool {
        self.n_coarse == self.assignment.len()
    }

    /// Members of each supernode, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_coarse];
        for (v, &s) in self.assignment.iter().enumerate() {
            out[s].push(v);
        }
        out
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_coarse];
        for &s in &self.assignment {
            out[s] += 1;
        }
        out
    }

    /// The `n_fine x n_coarse` 0/1 matrix.
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_fine(), self.n_coarse);
        for (v, &s) in self.assignment.iter().enumerate() {
            m.set(v, s, 1.0);
        }
        m
    }

    /// Composition: `self` maps level l-1 to l, `next` maps l to l+1.
    pub fn then(&self, next: &MatchingMatrix) -> Result<MatchingMatrix, CoarsenError> {
        if next.n_fine() != self.n_coarse {
            return Err(CoarsenError::DimensionMismatch {
                matching: next.n_fine(),
                matrix: self.n_coarse,
            });
        }
        Ok(MatchingMatrix {
            n_coarse: next.n_coarse,
            assignment: self
                .assignment
                .iter()
                .map(|&s| next.assignment[s])
                .collect(),
        })
    }
}

/// `Mᵀ A M` in exact integer arithmetic, computed as `Mᵀ (A M)`.
pub fn coarsen_adjacency(
    a: &AdjacencyMatrix,
    m: &MatchingMatrix,
) -> Result<AdjacencyMatrix, CoarsenError> {
    let n = a.size();
    if m.n_fine() != n {
        return Err(CoarsenError::DimensionMismatch {
            matching: m.n_fine(),
            matrix: n,
        });
    }
    let k = m.n_coarse();
    // A M: n x k
    let mut am = vec![0u64; n * k];
    for u in 0..n {
        for (v, &w) in a.row(u).iter().enumerate() {
            if w != 0 {
                am[u * k + m.supernode_of(v)] += w;
            }
        }
    }
    let mut out = AdjacencyMatrix::zeros(k);
    for u in 0..n {
        let su = m.supernode_of(u);
        for b in 0..k {
            let w = am[u * k + b];
            if w != 0 {
                out.add(su, b, w);
            }
        }
    }
    Ok(out)
}
