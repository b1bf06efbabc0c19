use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::clause::{clause_match_graph, transfer_edges};
use super::{coarsen_adjacency, hybrid_match, random_match, ClauseMatchConfig, MatchingMatrix};
use crate::graph::{AdjacencyMatrix, LabeledGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMethod {
    #[serde(rename = "hm")]
    Hybrid,
    #[serde(rename = "cm")]
    Clause,
    Random,
    Identity,
}

impl fmt::Display for PoolingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolingMethod::Hybrid => "hm",
            PoolingMethod::Clause => "cm",
            PoolingMethod::Random => "random",
            PoolingMethod::Identity => "identity",
        })
    }
}

impl FromStr for PoolingMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hm" | "hybrid" => Ok(PoolingMethod::Hybrid),
            "cm" | "clause" => Ok(PoolingMethod::Clause),
            "random" => Ok(PoolingMethod::Random),
            "identity" | "none" => Ok(PoolingMethod::Identity),
            other => Err(format!("unknown pooling method `{other}`")),
        }
    }
}

/// One graph `G_l` of the hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyLevel {
    /// `A^l`; binarized at level 0, accumulated multiplicities above.
    pub adjacency: AdjacencyMatrix,
    /// Typed graph with edges carried over from level 0 (self-loops dropped).
    pub graph: LabeledGraph,
    /// Level-0 nodes covered by each node of this level.
    pub members: Vec<Vec<usize>>,
}

impl HierarchyLevel {
    pub fn size(&self) -> usize {
        self.adjacency.size()
    }
}

/// Graphs `G_0..G_K` and the `K` matchings between consecutive levels.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphHierarchy {
    pub method: PoolingMethod,
    pub levels: Vec<HierarchyLevel>,
    pub matchings: Vec<MatchingMatrix>,
    /// First pooling step at which nothing merged; from there on every
    /// matching is the identity.
    pub stopped_early_at: Option<usize>,
}

impl GraphHierarchy {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(HierarchyLevel::size).collect()
    }

    pub fn stopped_early(&self) -> bool {
        self.stopped_early_at.is_some()
    }
}

fn level_seed(seed: u64, level: usize) -> u64 {
    seed ^ (level as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Performs `steps` rounds of `method`, coarsening both the adjacency
/// (`Mᵀ A M`) and the typed graph each time.
///
/// Clause matching at level `l >= 1` runs on the typed graph produced by
/// edge transfer; hybrid and random matching run on the weighted `A^l`.
/// Once a round merges nothing, the remaining rounds are identities and
/// [`GraphHierarchy::stopped_early_at`] is set.
pub fn build_hierarchy(
    g: &LabeledGraph,
    method: PoolingMethod,
    steps: usize,
    cfg: &ClauseMatchConfig,
    seed: u64,
) -> GraphHierarchy {
    let base = HierarchyLevel {
        adjacency: g.adjacency(),
        graph: g.clone(),
        members: (0..g.node_count()).map(|v| vec![v]).collect(),
    };
    let mut levels = vec![base];
    let mut matchings = Vec::with_capacity(steps);
    let mut stopped_early_at = None;

    for step in 0..steps {
        let cur = levels.last().unwrap();
        let (matching, graph) = if stopped_early_at.is_some() {
            let n = cur.size();
            (MatchingMatrix::identity(n), cur.graph.clone())
        } else {
            match method {
                PoolingMethod::Clause => clause_match_graph(&cur.graph, cfg),
                PoolingMethod::Hybrid => {
                    let m = hybrid_match(&cur.adjacency);
                    let gr = transfer_edges(&cur.graph, &m);
                    (m, gr)
                }
                PoolingMethod::Random => {
                    let m = random_match(&cur.adjacency, level_seed(seed, step));
                    let gr = transfer_edges(&cur.graph, &m);
                    (m, gr)
                }
                PoolingMethod::Identity => {
                    (MatchingMatrix::identity(cur.size()), cur.graph.clone())
                }
            }
        };
        if matching.is_identity() && method != PoolingMethod::Identity && stopped_early_at.is_none()
        {
            stopped_early_at = Some(step);
        }
        let adjacency = coarsen_adjacency(&cur.adjacency, &matching).expect("matching fits level");
        let mut members = vec![Vec::new(); matching.n_coarse()];
        for (v, group) in cur.members.iter().enumerate() {
            members[matching.supernode_of(v)].extend_from_slice(group);
        }
        members.iter_mut().for_each(|m| m.sort_unstable());
        levels.push(HierarchyLevel {
            adjacency,
            graph,
            members,
        });
        matchings.push(matching);
    }

    GraphHierarchy {
        method,
        levels,
        matchings,
        stopped_early_at,
    }
}
