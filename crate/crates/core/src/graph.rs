//! Typed token multigraph, binarized adjacency and hop distances.
//!
//! A [`LabeledGraph`] keeps every typed edge it was built with (minus exact
//! duplicates). Numeric consumers never look at the types: they work on the
//! [`AdjacencyMatrix`], which at level 0 is the symmetric 0/1 connectivity
//! of the graph and at coarser levels carries accumulated multiplicities.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use thiserror::Error;

/// Dense node index in `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeCategory {
    Adjacency,
    Dependency,
    Coreference,
    SentenceSeq,
    Merged,
}

/// Edge type. Only dependency edges carry a relation label, and they are the
/// only directed edges (head to dependent).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Adjacency,
    Dependency(String),
    Coreference,
    SentenceSeq,
    Merged,
}

impl EdgeKind {
    pub fn dependency(label: impl Into<String>) -> Self {
        EdgeKind::Dependency(label.into())
    }

    pub fn category(&self) -> EdgeCategory {
        match self {
            EdgeKind::Adjacency => EdgeCategory::Adjacency,
            EdgeKind::Dependency(_) => EdgeCategory::Dependency,
            EdgeKind::Coreference => EdgeCategory::Coreference,
            EdgeKind::SentenceSeq => EdgeCategory::SentenceSeq,
            EdgeKind::Merged => EdgeCategory::Merged,
        }
    }

    pub fn dep_label(&self) -> Option<&str> {
        match self {
            EdgeKind::Dependency(l) => Some(l),
            _ => None,
        }
    }

    pub fn is_directed(&self) -> bool {
        matches!(self, EdgeKind::Dependency(_))
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeKind::Adjacency => f.write_str("ADJ:NEXT"),
            EdgeKind::Dependency(l) => write!(f, "DEP:{l}"),
            EdgeKind::Coreference => f.write_str("COREF"),
            EdgeKind::SentenceSeq => f.write_str("SENT:NEXT"),
            EdgeKind::Merged => f.write_str("MERGED"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("endpoint out of range: edge ({src}, {dst}) in a graph of {n} nodes")]
    EndpointOutOfRange { src: usize, dst: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("dependency edge ({src}, {dst}) has an empty relation label")]
    EmptyDependencyLabel { src: usize, dst: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
}

/// Typed multigraph over `n` token nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabeledGraph {
    n: usize,
    edges: Vec<Edge>,
}

impl LabeledGraph {
    /// Builds a graph, validating endpoints and collapsing duplicate
    /// `(src, dst, kind)` triples. Undirected kinds are stored with
    /// `src < dst`. Edge order follows first insertion.
    pub fn new<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize, EdgeKind)>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (src, dst, kind) in edges {
            if src >= n || dst >= n {
                return Err(GraphError::EndpointOutOfRange { src, dst, n });
            }
            if src == dst {
                return Err(GraphError::SelfLoop(src));
            }
            if let EdgeKind::Dependency(l) = &kind {
                if l.is_empty() {
                    return Err(GraphError::EmptyDependencyLabel { src, dst });
                }
            }
            let (src, dst) = if kind.is_directed() {
                (src, dst)
            } else {
                (src.min(dst), src.max(dst))
            };
            let edge = Edge {
                src: NodeId(src),
                dst: NodeId(dst),
                kind,
            };
            if seen.insert(edge.clone()) {
                out.push(edge);
            }
        }
        Ok(LabeledGraph { n, edges: out })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Distinct neighbors of `v`, direction and multiplicity ignored.
    pub fn neighbors(&self, v: NodeId) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for e in &self.edges {
            if e.src == v {
                out.insert(e.dst.0);
            } else if e.dst == v {
                out.insert(e.src.0);
            }
        }
        out
    }

    pub fn degree(&self, v: NodeId) -> usize {
        assert!(v.0 < self.n, "node {v} out of range");
        self.neighbors(v).len()
    }

    /// All degrees at once, in node order.
    pub fn degrees(&self) -> Vec<usize> {
        let mut sets = vec![BTreeSet::new(); self.n];
        for e in &self.edges {
            sets[e.src.0].insert(e.dst.0);
            sets[e.dst.0].insert(e.src.0);
        }
        sets.iter().map(BTreeSet::len).collect()
    }

    /// Level-0 adjacency: symmetric, binarized, zero diagonal.
    pub fn adjacency(&self) -> AdjacencyMatrix {
        let mut a = AdjacencyMatrix::zeros(self.n);
        for e in &self.edges {
            a.set(e.src.0, e.dst.0, 1);
            a.set(e.dst.0, e.src.0, 1);
        }
        a
    }
}

/// Square matrix of non-negative integer edge weights.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    values: Vec<u64>,
}

impl AdjacencyMatrix {
    pub fn zeros(n: usize) -> Self {
        AdjacencyMatrix {
            n,
            values: vec![0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self, GraphError> {
        let n = rows.len();
        let mut values = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(GraphError::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Ok(AdjacencyMatrix { n, values })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u64 {
        self.values[u * self.n + v]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, w: u64) {
        self.values[u * self.n + v] = w;
    }

    pub fn add(&mut self, u: usize, v: usize, w: u64) {
        self.values[u * self.n + v] += w;
    }

    pub fn row(&self, u: usize) -> &[u64] {
        &self.values[u * self.n..(u + 1) * self.n]
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.n).map(|u| self.row(u).to_vec()).collect()
    }

    /// Off-diagonal nonzero columns of row `u`, ascending.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(u)
            .iter()
            .enumerate()
            .filter(move |&(v, &w)| v != u && w > 0)
            .map(|(v, _)| v)
    }

    /// Number of distinct neighbors; the diagonal does not count.
    pub fn degree(&self, u: usize) -> usize {
        self.neighbors(u).count()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|u| (u + 1..self.n).all(|v| self.get(u, v) == self.get(v, u)))
    }

    pub fn total_weight(&self) -> u64 {
        self.values.iter().sum()
    }

    pub fn edge_count(&self) -> usize {
        (0..self.n)
            .map(|u| (u + 1..self.n).filter(|&v| self.get(u, v) > 0).count())
            .sum()
    }

    /// Weights as floats, for use as a propagation operator.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&w| w as f64).collect()
    }
}

/// Result of a hop-count query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Hops {
    Finite(usize),
    Unreachable,
}

impl Hops {
    pub fn finite(self) -> Option<usize> {
        match self {
            Hops::Finite(d) => Some(d),
            Hops::Unreachable => None,
        }
    }
}

/// BFS distances from `src` to every node; `None` marks unreachable.
pub fn bfs_distances(a: &AdjacencyMatrix, src: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; a.size()];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].unwrap();
        for v in a.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Unit-length hop count between `u` and `v`; any positive weight is one hop.
pub fn shortest_path_length(a: &AdjacencyMatrix, u: NodeId, v: NodeId) -> Hops {
    assert!(u.0 < a.size() && v.0 < a.size(), "node out of range");
    if u == v {
        return Hops::Finite(0);
    }
    match bfs_distances(a, u.0)[v.0] {
        Some(d) => Hops::Finite(d),
        None => Hops::Unreachable,
    }
}
